"""Problem model, lifted block operators, policies, and moment propagation.

A horizon-``N`` linear system is stacked into one affine relation

    x = state_map @ x0 + input_map @ u + noise_map @ w

over the full trajectory ``x = [x_0; ...; x_N]``, so closed-loop means and
covariances become dense matrix algebra. Feedback policies come in two
equivalent parameterizations connected by a bijection:

* state feedback ``K``: control at stage k is affine in the deviations of the
  visited states from their means,
* disturbance feedback ``T = K (I - input_map K)^{-1}``: affine in the
  open-loop (uncontrolled) state deviations, which makes the control energy
  and terminal covariance convex in the gains.

Both live on the same block-lower-triangular sparsity pattern (the causality
mask): stage k may use states 0..k only, and the final state block is never
fed back.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DimMismatchError, InvalidInputError, StructureViolationError
from .gaussians import Gaussian
from .matfun import symmetrize


@dataclass(frozen=True)
class LtvSystem:
    """Discrete-time linear time-varying system ``x+ = A x + B u + G w``.

    Stage matrices are stacked along the first axis: ``A`` has shape
    ``(N, n_x, n_x)``, ``B`` is ``(N, n_x, n_u)``, ``G`` is ``(N, n_x, n_w)``.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.B, dtype=float)
        g = np.asarray(self.G, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise InvalidInputError(f"A must have shape (N, n_x, n_x), got {a.shape}")
        n, n_x = a.shape[0], a.shape[1]
        if b.ndim != 3 or b.shape[0] != n or b.shape[1] != n_x:
            raise DimMismatchError(f"B shape {b.shape} inconsistent with A {a.shape}")
        if g.ndim != 3 or g.shape[0] != n or g.shape[1] != n_x:
            raise DimMismatchError(f"G shape {g.shape} inconsistent with A {a.shape}")
        for name, arr in (("A", a), ("B", b), ("G", g)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "G", g)

    @classmethod
    def time_invariant(cls, A, B, G, horizon: int) -> "LtvSystem":
        """Broadcast one ``(A, B, G)`` triple across ``horizon`` stages."""
        if horizon < 1:
            raise InvalidInputError("horizon must be a positive integer")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return cls(
            np.repeat(A[None], horizon, axis=0),
            np.repeat(B[None], horizon, axis=0),
            np.repeat(G[None], horizon, axis=0),
        )

    @property
    def horizon(self) -> int:
        return self.A.shape[0]

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_u(self) -> int:
        return self.B.shape[2]

    @property
    def n_w(self) -> int:
        return self.G.shape[2]


@dataclass(frozen=True)
class SteeringProblem:
    """Steer an initial Gaussian toward a goal Gaussian over a finite horizon.

    ``lam`` weighs the terminal-distribution cost against control energy and
    ``gamma`` scales the per-stage noise covariance ``gamma * I``.
    """

    system: LtvSystem
    init: Gaussian
    goal: Gaussian
    lam: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidInputError("lam must be positive")
        if self.gamma <= 0:
            raise InvalidInputError("gamma must be positive")
        n_x = self.system.n_x
        if self.init.dim != n_x or self.goal.dim != n_x:
            raise DimMismatchError(
                f"init dim {self.init.dim} / goal dim {self.goal.dim} "
                f"do not match state dim {n_x}"
            )

    @property
    def horizon(self) -> int:
        return self.system.horizon

    @classmethod
    def time_invariant(cls, A, B, G, horizon, init, goal, lam, gamma=1.0):
        return cls(LtvSystem.time_invariant(A, B, G, horizon), init, goal, lam, gamma)


@dataclass(frozen=True)
class BlockOperators:
    """Lifted trajectory operators, computed once per problem.

    Attributes
    ----------
    state_map : ndarray, ((N+1) n_x, n_x)
        Stacked state-transition products mapping x0 to the whole trajectory.
    input_map, noise_map : ndarray
        Strictly block-lower-triangular maps from stacked inputs / noises to
        the trajectory (first block row zero).
    terminal_selector : ndarray, (n_x, (N+1) n_x)
        Picks the final state block out of the stacked trajectory.
    open_loop_mean : ndarray, ((N+1) n_x,)
        Mean trajectory under zero input, ``state_map @ init.mean``.
    open_loop_cov : ndarray
        Covariance of the uncontrolled stacked trajectory,
        ``state_map S0 state_map^T + gamma * noise_map noise_map^T``.
    mask : ndarray of bool, (N n_u, (N+1) n_x)
        Admissible nonzero pattern for feedback gains: block (k, i) allowed
        iff i <= k, so the last state block is never used.
    """

    state_map: np.ndarray
    input_map: np.ndarray
    noise_map: np.ndarray
    terminal_selector: np.ndarray
    open_loop_mean: np.ndarray
    open_loop_cov: np.ndarray
    mask: np.ndarray
    n_x: int
    n_u: int
    n_w: int
    horizon: int

    @cached_property
    def open_loop_cov_factor(self) -> np.ndarray:
        """Factor R with ``open_loop_cov = R @ R.T`` (eigen square root)."""
        values, vectors = np.linalg.eigh(self.open_loop_cov)
        return vectors * np.sqrt(np.clip(values, 0.0, None))


def assemble(problem: SteeringProblem) -> BlockOperators:
    """Build the lifted block operators for a steering problem."""
    sys = problem.system
    n, n_x, n_u, n_w = sys.horizon, sys.n_x, sys.n_u, sys.n_w

    state_map = np.zeros(((n + 1) * n_x, n_x))
    state_map[:n_x] = np.eye(n_x)
    for k in range(1, n + 1):
        state_map[k * n_x : (k + 1) * n_x] = sys.A[k - 1] @ state_map[(k - 1) * n_x : k * n_x]

    def lower_map(mats: np.ndarray, width: int) -> np.ndarray:
        out = np.zeros(((n + 1) * n_x, n * width))
        for i in range(n):
            block = mats[i]
            out[(i + 1) * n_x : (i + 2) * n_x, i * width : (i + 1) * width] = block
            for k in range(i + 2, n + 1):
                block = sys.A[k - 1] @ block
                out[k * n_x : (k + 1) * n_x, i * width : (i + 1) * width] = block
        return out

    input_map = lower_map(sys.B, n_u)
    noise_map = lower_map(sys.G, n_w)

    terminal_selector = np.zeros((n_x, (n + 1) * n_x))
    terminal_selector[:, n * n_x :] = np.eye(n_x)

    open_loop_cov = symmetrize(
        state_map @ problem.init.cov @ state_map.T
        + problem.gamma * (noise_map @ noise_map.T)
    )

    mask = np.zeros((n * n_u, (n + 1) * n_x), dtype=bool)
    for k in range(n):
        mask[k * n_u : (k + 1) * n_u, : (k + 1) * n_x] = True

    return BlockOperators(
        state_map=state_map,
        input_map=input_map,
        noise_map=noise_map,
        terminal_selector=terminal_selector,
        open_loop_mean=state_map @ problem.init.mean,
        open_loop_cov=open_loop_cov,
        mask=mask,
        n_x=n_x,
        n_u=n_u,
        n_w=n_w,
        horizon=n,
    )


STATE_FEEDBACK = "state"
DISTURBANCE_FEEDBACK = "disturbance"


@dataclass(frozen=True)
class HistoryPolicy:
    """Affine state-history feedback policy.

    ``gains`` is the full (N n_u, (N+1) n_x) gain matrix on the causality
    mask and ``u_ff`` the stacked feedforward vector. ``feedback`` says which
    parameterization the gains are in: ``"state"`` (gains multiply state
    deviations from the mean trajectory) or ``"disturbance"`` (the
    transformed variable that is affine in the open-loop deviations).
    """

    gains: np.ndarray
    u_ff: np.ndarray
    feedback: str = STATE_FEEDBACK

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        u_ff = np.atleast_1d(np.asarray(self.u_ff, dtype=float))
        if self.feedback not in (STATE_FEEDBACK, DISTURBANCE_FEEDBACK):
            raise InvalidInputError(f"unknown feedback form {self.feedback!r}")
        if gains.ndim != 2:
            raise InvalidInputError("gains must be a matrix")
        if u_ff.ndim != 1 or u_ff.shape[0] != gains.shape[0]:
            raise DimMismatchError(
                f"u_ff length {u_ff.shape} inconsistent with gains {gains.shape}"
            )
        if not (np.all(np.isfinite(gains)) and np.all(np.isfinite(u_ff))):
            raise InvalidInputError("policy contains non-finite entries")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "u_ff", u_ff)


@dataclass(frozen=True)
class MemorylessPolicy:
    """Per-stage affine state feedback ``u_k = gains[k] (x_k - mean_k) + u_ff[k]``."""

    gains: np.ndarray  # (N, n_u, n_x)
    u_ff: np.ndarray  # (N * n_u,)

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        u_ff = np.atleast_1d(np.asarray(self.u_ff, dtype=float))
        if gains.ndim != 3:
            raise InvalidInputError("gains must have shape (N, n_u, n_x)")
        if u_ff.shape[0] != gains.shape[0] * gains.shape[1]:
            raise DimMismatchError(
                f"u_ff length {u_ff.shape[0]} != horizon * n_u for gains {gains.shape}"
            )
        if not (np.all(np.isfinite(gains)) and np.all(np.isfinite(u_ff))):
            raise InvalidInputError("policy contains non-finite entries")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "u_ff", u_ff)

    def embed(self, ops: BlockOperators) -> np.ndarray:
        """Block-diagonal embedding into the full masked gain matrix."""
        n, n_u, n_x = ops.horizon, ops.n_u, ops.n_x
        if self.gains.shape != (n, n_u, n_x):
            raise DimMismatchError(
                f"gains shape {self.gains.shape} does not match problem "
                f"({n}, {n_u}, {n_x})"
            )
        full = np.zeros((n * n_u, (n + 1) * n_x))
        for k in range(n):
            full[k * n_u : (k + 1) * n_u, k * n_x : (k + 1) * n_x] = self.gains[k]
        return full


def check_mask(gains: np.ndarray, ops: BlockOperators) -> np.ndarray:
    """Validate that ``gains`` fits the causality mask exactly; returns it."""
    gains = np.asarray(gains, dtype=float)
    if gains.shape != ops.mask.shape:
        raise StructureViolationError(
            f"gain matrix shape {gains.shape} does not match mask {ops.mask.shape}"
        )
    if np.any(gains[~ops.mask] != 0.0):
        worst = float(np.max(np.abs(gains[~ops.mask])))
        raise StructureViolationError(
            f"gain matrix has entries outside the causality mask (max |.| = {worst:.3e})"
        )
    return gains


def _unit_lower_solve(m: np.ndarray, rhs: np.ndarray, trans: int = 0) -> np.ndarray:
    # m is unit lower triangular by construction; forward substitution is exact
    # in structure and O(n^2) per right-hand side.
    return scipy.linalg.solve_triangular(
        m, rhs, lower=True, unit_diagonal=True, trans=trans
    )


def disturbance_from_state(gains: np.ndarray, ops: BlockOperators) -> np.ndarray:
    """Transform state-feedback gains K into disturbance-feedback gains.

    Computes ``K (I - input_map K)^{-1} = (I - K input_map)^{-1} K`` by
    forward substitution; the input-side closure is unit lower triangular
    because ``K input_map`` is strictly block lower triangular. The result
    lives on the same mask.
    """
    gains = check_mask(gains, ops)
    closure = np.eye(gains.shape[0]) - gains @ ops.input_map
    out = _unit_lower_solve(closure, gains)
    out[~ops.mask] = 0.0
    return out


def state_from_disturbance(gains: np.ndarray, ops: BlockOperators) -> np.ndarray:
    """Inverse transform ``(I + T input_map)^{-1} T`` back to state feedback."""
    gains = check_mask(gains, ops)
    closure = np.eye(gains.shape[0]) + gains @ ops.input_map
    out = _unit_lower_solve(closure, gains)
    out[~ops.mask] = 0.0
    return out


def _closed_loop_factors(policy, ops: BlockOperators):
    """Return (gain matrix, trajectory transfer L) with Cov[x] = L S L^T.

    For disturbance feedback, L = I + input_map T is formed directly; for
    state feedback, L = (I - input_map K)^{-1} is applied through triangular
    solves (callers get a dense L; sizes are (N+1) n_x square).
    """
    dim = ops.mask.shape[1]
    if isinstance(policy, MemorylessPolicy):
        gains = check_mask(policy.embed(ops), ops)
        form = STATE_FEEDBACK
    elif isinstance(policy, HistoryPolicy):
        gains = check_mask(policy.gains, ops)
        form = policy.feedback
    else:
        raise InvalidInputError(f"unsupported policy type {type(policy).__name__}")
    if form == DISTURBANCE_FEEDBACK:
        transfer = np.eye(dim) + ops.input_map @ gains
    else:
        closure = np.eye(dim) - ops.input_map @ gains
        transfer = _unit_lower_solve(closure, np.eye(dim))
    return gains, transfer


def stage_moments(policy, ops: BlockOperators) -> tuple[np.ndarray, np.ndarray]:
    """Analytic per-stage means and covariances under a policy.

    Returns ``(means, covs)`` with shapes ``(N+1, n_x)`` and
    ``(N+1, n_x, n_x)``.
    """
    gains, transfer = _closed_loop_factors(policy, ops)
    mean = ops.open_loop_mean + ops.input_map @ policy.u_ff
    cov = transfer @ ops.open_loop_cov @ transfer.T
    n, n_x = ops.horizon, ops.n_x
    means = mean.reshape(n + 1, n_x)
    covs = np.empty((n + 1, n_x, n_x))
    for k in range(n + 1):
        covs[k] = symmetrize(cov[k * n_x : (k + 1) * n_x, k * n_x : (k + 1) * n_x])
    return means, covs


def terminal_moments(policy, ops: BlockOperators) -> Gaussian:
    """Mean and covariance of the final state under a policy."""
    gains, transfer = _closed_loop_factors(policy, ops)
    sel = ops.terminal_selector
    mean = sel @ (ops.open_loop_mean + ops.input_map @ policy.u_ff)
    tail = sel @ transfer
    cov = symmetrize(tail @ ops.open_loop_cov @ tail.T)
    return Gaussian(mean, cov, require_pd=False)


def expected_control_energy(policy, ops: BlockOperators) -> float:
    """Expected total control energy ``E[sum_k u_k^T u_k]`` under a policy."""
    gains, transfer = _closed_loop_factors(policy, ops)
    if isinstance(policy, HistoryPolicy) and policy.feedback == DISTURBANCE_FEEDBACK:
        quad = float(np.einsum("ij,jk,ik->", gains, ops.open_loop_cov, gains))
    else:
        effective = gains @ transfer
        quad = float(np.einsum("ij,jk,ik->", effective, ops.open_loop_cov, effective))
    return quad + float(policy.u_ff @ policy.u_ff)
