"""KL-divergence terminal cost over per-stage feedback, with analytic
gradients, minimized by the limited-memory quasi-Newton engine.

The KL cost does not become convex under the disturbance-feedback
transform the way the squared-Wasserstein cost does, so this solver stays
in the per-stage (memoryless) state-feedback parameterization and treats
the task as a smooth unconstrained program in the stage gains and the
feedforward sequence. Objective and gradient share one closed-loop
trajectory factorization per evaluation.
"""

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import DimMismatchError, NotPositiveDefiniteError
from .ccp import SolveReport
from .quasinewton import QuasiNewtonSettings, minimize_lbfgs
from .steering import (
    BlockOperators,
    MemorylessPolicy,
    SteeringProblem,
    assemble,
    terminal_moments,
)


class KlGradient(NamedTuple):
    """Gradient blocks shaped like the policy: stage gains plus feedforward."""

    gains: np.ndarray  # (N, n_u, n_x)
    u_ff: np.ndarray  # (N * n_u,)

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.gains.ravel(), self.u_ff])


@dataclass(frozen=True)
class KlObjective:
    """Precomputed data for the KL terminal cost.

    Caches the goal-covariance inverse and log-determinant plus the map
    from stacked inputs to the final state; everything else is shared with
    the lifted operators.
    """

    problem: SteeringProblem
    ops: BlockOperators = None

    def __post_init__(self):
        ops = self.ops if self.ops is not None else assemble(self.problem)
        object.__setattr__(self, "ops", ops)
        goal = self.problem.goal
        try:
            chol, _ = scipy.linalg.cho_factor(goal.cov, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "goal covariance must be positive definite for the KL cost"
            ) from exc
        object.__setattr__(
            self, "goal_inv", scipy.linalg.cho_solve((chol, True), np.eye(ops.n_x))
        )
        object.__setattr__(
            self, "goal_logdet", 2.0 * float(np.sum(np.log(np.diag(chol))))
        )
        object.__setattr__(
            self, "terminal_input_map", ops.input_map[-ops.n_x :, :].copy()
        )


def _stage_arrays(policy: MemorylessPolicy, obj: KlObjective):
    ops = obj.ops
    expected = (ops.horizon, ops.n_u, ops.n_x)
    if policy.gains.shape != expected:
        raise DimMismatchError(
            f"policy gains shape {policy.gains.shape} does not match problem {expected}"
        )
    return policy.gains, policy.u_ff


def _evaluate(gains3: np.ndarray, u_ff: np.ndarray, obj: KlObjective, with_grad: bool):
    """Objective (and optionally gradient) at raw gain/feedforward arrays.

    Raises NotPositiveDefiniteError when the policy drives the terminal
    covariance singular; qn_minimize converts that into a rejected line
    search step.
    """
    ops = obj.ops
    n, n_x, n_u = ops.horizon, ops.n_x, ops.n_u
    dim = (n + 1) * n_x
    lam = obj.problem.lam

    gains = np.zeros((n * n_u, dim))
    for k in range(n):
        gains[k * n_u : (k + 1) * n_u, k * n_x : (k + 1) * n_x] = gains3[k]

    # closure is unit lower triangular, so the trajectory transfer
    # L = (I - input_map K)^{-1} is a forward substitution, not a true inverse
    closure = np.eye(dim) - ops.input_map @ gains
    transfer = scipy.linalg.solve_triangular(
        closure, np.eye(dim), lower=True, unit_diagonal=True
    )
    traj_cov = transfer @ ops.open_loop_cov @ transfer.T
    term_cov = traj_cov[-n_x:, -n_x:]
    try:
        chol, _ = scipy.linalg.cho_factor(term_cov, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "terminal covariance is not positive definite under this policy"
        ) from exc
    logdet_term = 2.0 * float(np.sum(np.log(np.diag(chol))))

    gains_cov = gains @ traj_cov
    energy = float(np.sum(gains_cov * gains)) + float(u_ff @ u_ff)

    mean_term = ops.open_loop_mean[-n_x:] + obj.terminal_input_map @ u_ff
    gap = obj.problem.goal.mean - mean_term
    fit = (
        float(np.sum(obj.goal_inv * term_cov))
        + float(gap @ obj.goal_inv @ gap)
        - n_x
        + obj.goal_logdet
        - logdet_term
    )
    value = energy + 0.5 * lam * fit
    if not with_grad:
        return value, None

    term_inv = scipy.linalg.cho_solve((chol, True), np.eye(n_x))
    # three pieces: d tr(K Sigma K^T) through K, the same trace through the
    # transfer L, and the terminal trace/logdet pair through L
    grad_full = 2.0 * gains_cov
    grad_full += 2.0 * ops.input_map.T @ (transfer.T @ (gains.T @ gains_cov))
    fit_rows = (obj.goal_inv - term_inv) @ traj_cov[-n_x:, :]
    grad_full += lam * ops.input_map.T @ (transfer[-n_x:, :].T @ fit_rows)

    gains_grad = np.empty_like(gains3)
    for k in range(n):
        gains_grad[k] = grad_full[k * n_u : (k + 1) * n_u, k * n_x : (k + 1) * n_x]
    uff_grad = 2.0 * u_ff - lam * obj.terminal_input_map.T @ (obj.goal_inv @ gap)
    return value, KlGradient(gains_grad, uff_grad)


def kl_objective(policy: MemorylessPolicy, obj: KlObjective) -> float:
    """Control energy plus lam times the terminal KL divergence to the goal."""
    gains3, u_ff = _stage_arrays(policy, obj)
    value, _ = _evaluate(gains3, u_ff, obj, with_grad=False)
    return value


def kl_gradient(policy: MemorylessPolicy, obj: KlObjective) -> KlGradient:
    """Exact gradient of kl_objective in the free policy parameters."""
    gains3, u_ff = _stage_arrays(policy, obj)
    _, grad = _evaluate(gains3, u_ff, obj, with_grad=True)
    return grad


def qn_minimize(
    obj: KlObjective,
    settings: QuasiNewtonSettings = QuasiNewtonSettings(),
    init: Optional[MemorylessPolicy] = None,
) -> SolveReport:
    """Minimize the KL steering objective from ``init`` (default: zeros).

    Zero gains are always feasible (the open-loop terminal covariance is
    positive definite whenever the initial covariance is and gamma > 0), and
    infeasible trial points during the line search are simply rejected.
    """
    ops = obj.ops
    n, n_x, n_u = ops.horizon, ops.n_x, ops.n_u
    n_gain = n * n_u * n_x

    if init is None:
        z0 = np.zeros(n_gain + n * n_u)
    else:
        gains3, u_ff = _stage_arrays(init, obj)
        z0 = np.concatenate([gains3.ravel(), u_ff])

    def value_and_grad(z):
        gains3 = z[:n_gain].reshape(n, n_u, n_x)
        # overflow at wildly infeasible line-search probes is expected; such
        # points are rejected below rather than warned about
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                value, grad = _evaluate(gains3, z[n_gain:], obj, with_grad=True)
            except NotPositiveDefiniteError:
                return np.inf, None
        flat = grad.ravel()
        if not (np.isfinite(value) and np.all(np.isfinite(flat))):
            return np.inf, None
        return value, flat

    started = time.perf_counter()
    result = minimize_lbfgs(value_and_grad, z0, settings)
    wall = time.perf_counter() - started

    policy = MemorylessPolicy(
        result.x[:n_gain].reshape(n, n_u, n_x).copy(), result.x[n_gain:].copy()
    )
    return SolveReport(
        policy=policy,
        terminal=terminal_moments(policy, ops),
        objective_trace=result.trace,
        trace_times=result.trace_times,
        iterations=result.iterations,
        wall_time=wall,
        termination=result.termination,
    )
