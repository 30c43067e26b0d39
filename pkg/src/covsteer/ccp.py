"""Difference-of-convex objective for the squared-Wasserstein terminal cost
and the convex-concave procedure that minimizes it.

Over disturbance-feedback gains the objective splits into convex pieces

    total = mean_term + effort_term + trace_term - overlap_term

where the subtracted overlap term, a scaled nuclear norm of a matrix affine
in the gains, is itself convex. Each outer iteration linearizes the overlap
term at the current gains (any subgradient gives a global affine minorant,
hence a convex upper-bound surrogate that touches at the iterate) and
minimizes the quadratic surrogate over the causality mask. That inner
problem is solved matrix free: preconditioned conjugate gradient on the
masked stationarity equations, warm started at the current gains so the
surrogate never increases and the outer objective trace is monotone.

The feedforward input decouples from the gains entirely and is obtained
once, up front, from a small regularized least-squares system.
"""

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.linalg

from .errors import InnerSolveFailedError, InvalidInputError
from .gaussians import Gaussian
from .matfun import nuclear_norm, nuclear_norm_subgradient, sqrtm_psd
from .steering import (
    DISTURBANCE_FEEDBACK,
    STATE_FEEDBACK,
    BlockOperators,
    HistoryPolicy,
    MemorylessPolicy,
    SteeringProblem,
    assemble,
    check_mask,
    disturbance_from_state,
    state_from_disturbance,
    terminal_moments,
)

TERMINATION_CONVERGED = "Converged"
TERMINATION_MAX_ITERS = "MaxIters"
TERMINATION_GRAD_TOL = "GradTol"
TERMINATION_REL_F_TOL = "RelFTol"


class CostTerms(NamedTuple):
    """The four pieces of the difference-of-convex objective.

    ``total = mean_term + effort_term + trace_term - overlap_term``; the
    overlap term is the subtracted concave part (a nuclear norm, convex, so
    its negative is concave).
    """

    mean_term: float
    effort_term: float
    trace_term: float
    overlap_term: float

    @property
    def total(self) -> float:
        return self.mean_term + self.effort_term + self.trace_term - self.overlap_term


@dataclass(frozen=True)
class CcpSettings:
    epsilon: float = 1e-5
    max_iters: int = 200
    inner_tol: float = 1e-8
    inner_max_iters: Optional[int] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be a positive integer")
        if self.inner_tol <= 0:
            raise InvalidInputError("inner_tol must be positive")
        if self.inner_max_iters is not None and self.inner_max_iters < 1:
            raise InvalidInputError("inner_max_iters must be a positive integer")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solver run, shared by both cost types.

    ``policy`` is always directly executable feedback (state or memoryless
    form); ``disturbance_policy`` additionally carries the transformed-gain
    parameterization when the solver worked in it.
    """

    policy: Union[HistoryPolicy, MemorylessPolicy]
    terminal: Gaussian
    objective_trace: np.ndarray
    trace_times: np.ndarray
    iterations: int
    wall_time: float
    termination: str
    disturbance_policy: Optional[HistoryPolicy] = None


@dataclass(frozen=True)
class DcObjective:
    """Precomputed data for evaluating the difference-of-convex objective.

    ``goal_sqrt`` is the symmetric square root of the goal covariance,
    ``cov_factor`` a factor R of the open-loop trajectory covariance
    (S = R R^T from its eigendecomposition), and ``terminal_input_map`` the
    map from stacked inputs to the final state.
    """

    problem: SteeringProblem
    ops: BlockOperators = None

    def __post_init__(self):
        ops = self.ops if self.ops is not None else assemble(self.problem)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "goal_sqrt", sqrtm_psd(self.problem.goal.cov))
        object.__setattr__(self, "cov_factor", ops.open_loop_cov_factor)
        object.__setattr__(
            self, "terminal_input_map", ops.input_map[-ops.n_x :, :].copy()
        )

    @property
    def open_loop_terminal_mean(self) -> np.ndarray:
        return self.ops.open_loop_mean[-self.ops.n_x :]

    def terminal_mean(self, u_ff: np.ndarray) -> np.ndarray:
        return self.open_loop_terminal_mean + self.terminal_input_map @ u_ff

    def closed_loop_terminal_rows(self, theta: np.ndarray) -> np.ndarray:
        """Rows mapping the open-loop trajectory deviation to the final state
        under disturbance feedback, i.e. the terminal block of I plus the
        input map composed with the gains."""
        rows = self.terminal_input_map @ theta
        n_x = self.ops.n_x
        rows[:, -n_x:] += np.eye(n_x)
        return rows

    def overlap_factor(self, theta: np.ndarray) -> np.ndarray:
        """Matrix whose singular values measure goal/terminal covariance
        overlap; its scaled nuclear norm is the subtracted objective term."""
        return self.goal_sqrt @ (self.closed_loop_terminal_rows(theta) @ self.cov_factor)


def eval_terms(u_ff: np.ndarray, theta: np.ndarray, obj: DcObjective) -> CostTerms:
    """Evaluate the four objective pieces at a masked gain matrix."""
    theta = check_mask(theta, obj.ops)
    u_ff = np.asarray(u_ff, dtype=float)
    lam = obj.problem.lam

    gap = obj.terminal_mean(u_ff) - obj.problem.goal.mean
    mean_term = float(u_ff @ u_ff) + lam * float(gap @ gap)

    scaled = theta @ obj.cov_factor
    effort_term = float(np.sum(scaled * scaled))

    tail = obj.closed_loop_terminal_rows(theta) @ obj.cov_factor
    trace_term = lam * (
        float(np.sum(tail * tail)) + float(np.trace(obj.problem.goal.cov))
    )

    overlap_term = 2.0 * lam * nuclear_norm(obj.goal_sqrt @ tail)
    return CostTerms(mean_term, effort_term, trace_term, overlap_term)


def overlap_subgradient(theta: np.ndarray, obj: DcObjective) -> np.ndarray:
    """A subgradient of the overlap term at ``theta``, projected to the mask.

    Chain rule through the affine overlap factor: with C = goal_sqrt (F +
    M theta) R and U_1 V_1^T the polar direction of C on its row space, the
    subgradient is 2 lam M^T goal_sqrt U_1 V_1^T R^T.
    """
    theta = check_mask(theta, obj.ops)
    direction = nuclear_norm_subgradient(obj.overlap_factor(theta))
    grad = (obj.goal_sqrt @ obj.terminal_input_map).T @ direction @ obj.cov_factor.T
    return np.where(obj.ops.mask, 2.0 * obj.problem.lam * grad, 0.0)


def _quadratic_part(theta: np.ndarray, obj: DcObjective) -> float:
    """effort_term + trace_term at ``theta`` (the convex quadratic piece)."""
    lam = obj.problem.lam
    scaled = theta @ obj.cov_factor
    tail = obj.closed_loop_terminal_rows(theta) @ obj.cov_factor
    return float(np.sum(scaled * scaled)) + lam * (
        float(np.sum(tail * tail)) + float(np.trace(obj.problem.goal.cov))
    )


def surrogate_value(
    theta: np.ndarray,
    sub_grad: np.ndarray,
    theta_ref: np.ndarray,
    obj: DcObjective,
) -> float:
    """Convex upper bound used by one outer iteration: the quadratic part at
    ``theta`` minus the overlap term linearized at ``theta_ref``.

    Upper-bounds effort + trace - overlap everywhere and touches it at
    ``theta = theta_ref``.
    """
    theta = check_mask(theta, obj.ops)
    theta_ref = check_mask(theta_ref, obj.ops)
    overlap_ref = 2.0 * obj.problem.lam * nuclear_norm(obj.overlap_factor(theta_ref))
    linear = float(np.sum(sub_grad * (theta - theta_ref)))
    return _quadratic_part(theta, obj) - overlap_ref - linear


def solve_mean_subproblem(obj: DcObjective) -> np.ndarray:
    """Closed-form feedforward: regularized least squares steering the
    terminal mean toward the goal mean. Decoupled from the gains."""
    m = obj.terminal_input_map
    lam = obj.problem.lam
    normal = np.eye(m.shape[1]) + lam * (m.T @ m)
    rhs = lam * (m.T @ (obj.problem.goal.mean - obj.open_loop_terminal_mean))
    return scipy.linalg.solve(normal, rhs, assume_a="pos")


def _masked_pcg(apply_op, precond, rhs, x0, tol, max_iters):
    """Preconditioned conjugate gradient over masked matrices with the
    Frobenius inner product. Returns (solution, residual_norm, converged)."""
    x = x0.copy()
    r = rhs - apply_op(x)
    res = float(np.linalg.norm(r))
    if res <= tol:
        return x, res, True
    z = precond(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, max_iters + 1):
        ap = apply_op(p)
        denom = float(np.sum(p * ap))
        if denom <= 0.0 or not np.isfinite(denom):
            # loss of positive definiteness in finite precision; stop here
            break
        alpha = rz / denom
        x += alpha * p
        if it % 50 == 0:
            r = rhs - apply_op(x)  # periodic true residual to limit drift
        else:
            r -= alpha * ap
        res = float(np.linalg.norm(r))
        if res <= tol:
            return x, res, True
        z = precond(r)
        rz_next = float(np.sum(r * z))
        p = z + (rz_next / rz) * p
        rz = rz_next
    return x, res, False


class _SurrogateSolver:
    """Factorizations reused across all outer iterations: only the
    linearization point (hence the right-hand side) changes.

    The stationarity operator splits as A = A0 + low-rank, where
    A0(X) = 2 mask(X S) dominates the conditioning. A0 inverts exactly one
    block row at a time against leading principal submatrices of the
    open-loop covariance, whose Cholesky factors are nested inside the full
    factor, so the preconditioned operator is identity plus a correction of
    rank at most n_x times the trajectory dimension and conjugate gradient
    converges in a modest number of steps at any horizon.
    """

    def __init__(self, obj: DcObjective):
        ops = obj.ops
        lam = obj.problem.lam
        m1 = obj.terminal_input_map
        self.n_x, self.n_u, self.horizon = ops.n_x, ops.n_u, ops.horizon
        self.mask = ops.mask
        self.cov = ops.open_loop_cov
        self.input_weight = np.eye(m1.shape[1]) + lam * (m1.T @ m1)
        self.rhs_base = -2.0 * lam * (m1.T @ self.cov[-ops.n_x :, :])
        try:
            self.cov_chol = np.linalg.cholesky(self.cov)
            self.sub_pinvs = None
        except np.linalg.LinAlgError:
            # Singular open-loop covariance (fewer noise channels than
            # states, or near-zero noise). A shifted Cholesky would amplify
            # residual components in the null space by 1/shift and stall the
            # conjugate gradient at a large floor; a per-block pseudo-inverse
            # zeroes them instead. Rhs and operator block rows stay inside
            # the range of the corresponding principal submatrix, so the
            # iteration is self-cleaning.
            self.cov_chol = None
            self.sub_pinvs = []
            for k in range(self.horizon):
                m = (k + 1) * self.n_x
                values, vectors = np.linalg.eigh(self.cov[:m, :m])
                cut = 1e-12 * max(float(values[-1]), 1.0)
                inv = np.where(values > cut, 1.0 / np.maximum(values, cut), 0.0)
                self.sub_pinvs.append((inv, vectors))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.mask, 2.0 * (self.input_weight @ x @ self.cov), 0.0)

    def precond(self, r: np.ndarray) -> np.ndarray:
        out = np.zeros_like(r)
        for k in range(self.horizon):
            m = (k + 1) * self.n_x
            rows = slice(k * self.n_u, (k + 1) * self.n_u)
            if self.cov_chol is not None:
                sub = self.cov_chol[:m, :m]
                y = scipy.linalg.solve_triangular(
                    sub, r[rows, :m].T, lower=True, check_finite=False
                )
                y = scipy.linalg.solve_triangular(
                    sub, y, lower=True, trans=1, check_finite=False
                )
            else:
                inv, vectors = self.sub_pinvs[k]
                y = vectors @ (inv[:, None] * (vectors.T @ r[rows, :m].T))
            out[rows, :m] = 0.5 * y.T
        return out

    def solve(self, sub_grad, warm_start, tol, max_iters):
        rhs = np.where(self.mask, sub_grad + self.rhs_base, 0.0)
        x, res, converged = _masked_pcg(
            self.apply, self.precond, rhs, warm_start, tol, max_iters
        )
        if not converged:
            # When the open-loop covariance is singular (fewer noise channels
            # than states, or vanishing noise) the masked system is consistent
            # but the shifted preconditioner cannot drive the residual to the
            # requested tolerance. Conjugate gradient still decreases the
            # surrogate monotonically from the warm start, so a small stalled
            # residual is safe to accept; only a large one is a failure.
            converged = res <= 1e-5 * (1.0 + float(np.linalg.norm(rhs)))
        return x, res, converged


def surrogate_solve_dense(sub_grad: np.ndarray, obj: DcObjective) -> np.ndarray:
    """Direct dense solve of the masked surrogate stationarity system.

    Debug and cross-validation path for small horizons; memory grows with
    the fourth power of the problem size, so refuse anything big.
    """
    solver = _SurrogateSolver(obj)
    mask_flat = obj.ops.mask.ravel()
    (idx,) = np.nonzero(mask_flat)
    if idx.size > 4000:
        raise InvalidInputError(
            f"dense surrogate solve limited to small problems, got {idx.size} unknowns"
        )
    # row-major vec: ravel(P X S) = kron(P, S^T) ravel(X); S symmetric
    full = 2.0 * np.kron(solver.input_weight, solver.cov)
    system = full[np.ix_(idx, idx)]
    rhs = np.where(obj.ops.mask, sub_grad + solver.rhs_base, 0.0).ravel()[idx]
    try:
        sol = scipy.linalg.solve(system, rhs, assume_a="pos")
    except np.linalg.LinAlgError:
        # singular open-loop covariance: minimum-norm solution of the
        # consistent system
        sol = scipy.linalg.lstsq(system, rhs)[0]
    out = np.zeros(mask_flat.shape)
    out[idx] = sol
    return out.reshape(obj.ops.mask.shape)


def _initial_gains(init, obj: DcObjective) -> np.ndarray:
    if init is None:
        return np.zeros(obj.ops.mask.shape)
    if isinstance(init, MemorylessPolicy):
        return disturbance_from_state(init.embed(obj.ops), obj.ops)
    if not isinstance(init, HistoryPolicy):
        raise InvalidInputError(f"unsupported init type {type(init).__name__}")
    if init.feedback == DISTURBANCE_FEEDBACK:
        return check_mask(init.gains, obj.ops)
    return disturbance_from_state(init.gains, obj.ops)


def ccp_minimize(
    obj: DcObjective,
    settings: CcpSettings = CcpSettings(),
    init: Optional[HistoryPolicy] = None,
) -> SolveReport:
    """Minimize the difference-of-convex objective by majorize-minimize.

    Each iteration replaces the subtracted overlap term with its affine
    minorant at the current gains and solves the resulting strictly convex
    quadratic over the causality mask by warm-started preconditioned
    conjugate gradient, so the objective trace is non-increasing. Stops when
    the relative decrease falls below ``settings.epsilon``.
    """
    start = time.perf_counter()
    u_ff = solve_mean_subproblem(obj)
    theta = _initial_gains(init, obj)
    solver = _SurrogateSolver(obj)
    masked_count = int(np.count_nonzero(obj.ops.mask))
    inner_cap = settings.inner_max_iters or (masked_count + 100)

    value = eval_terms(u_ff, theta, obj).total
    trace = [value]
    times = [time.perf_counter() - start]
    termination = TERMINATION_MAX_ITERS
    iterations = 0

    for _ in range(settings.max_iters):
        sub_grad = overlap_subgradient(theta, obj)
        tol = settings.inner_tol * (1.0 + float(np.linalg.norm(sub_grad)))
        theta, residual, converged = solver.solve(sub_grad, theta, tol, inner_cap)
        if not converged:
            raise InnerSolveFailedError(
                f"inner conjugate gradient stalled at residual {residual:.3e} "
                f"(tolerance {tol:.3e}, {inner_cap} iterations)",
                residual=residual,
            )
        iterations += 1
        previous, value = value, eval_terms(u_ff, theta, obj).total
        trace.append(value)
        times.append(time.perf_counter() - start)
        if abs(previous - value) / max(abs(value), 1.0) <= settings.epsilon:
            termination = TERMINATION_CONVERGED
            break

    gains_state = state_from_disturbance(theta, obj.ops)
    policy = HistoryPolicy(gains_state, u_ff, feedback=STATE_FEEDBACK)
    disturbance_policy = HistoryPolicy(theta, u_ff, feedback=DISTURBANCE_FEEDBACK)
    terminal = terminal_moments(disturbance_policy, obj.ops)
    return SolveReport(
        policy=policy,
        terminal=terminal,
        objective_trace=np.asarray(trace),
        trace_times=np.asarray(times),
        iterations=iterations,
        wall_time=time.perf_counter() - start,
        termination=termination,
        disturbance_policy=disturbance_policy,
    )
