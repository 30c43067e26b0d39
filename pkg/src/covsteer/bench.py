"""Timing harness: structured solver vs a generic quasi-Newton solve.

The generic comparator ("NLP") minimizes the steering objective directly
over the masked history-feedback gains, the parameterization in which the
cost is not convex. By default its gradients come from forward finite
differences, so each gradient costs one objective evaluation per free
parameter; that is what makes the generic route slow on long horizons.
Analytic gradients are available via gradient="analytic", and with them
the generic solver stops being uniformly slower than the structured one,
so timing comparisons in the test suite pin the finite-difference default.
"""

import csv
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .ccp import CcpSettings, DcObjective, SolveReport, ccp_minimize
from .errors import CovsteerError, InvalidInputError
from .klnlp import KlObjective, qn_minimize
from .matfun import sqrtm_psd
from .quasinewton import QuasiNewtonSettings, minimize_lbfgs
from .steering import (
    STATE_FEEDBACK,
    BlockOperators,
    HistoryPolicy,
    SteeringProblem,
    assemble,
    terminal_moments,
)

COST_WASSERSTEIN = "Wasserstein"
COST_KL = "KL"
SOLVER_CCP = "CCP"
SOLVER_NLP = "NLP"

CSV_FIELDS = (
    "solver",
    "cost",
    "N",
    "gamma",
    "wall_seconds",
    "iterations",
    "final_objective",
)


@dataclass(frozen=True)
class BenchRecord:
    """One timed solve; ``error`` is empty when the solve succeeded."""

    solver: str
    cost_type: str
    N: int
    gamma: float
    wall_seconds: float
    iterations: int
    final_objective: float
    error: str = ""


class WassersteinKForm:
    """Flat-vector value/gradient callables for the history-feedback form.

    Free parameters are the causality-masked gain entries followed by the
    stacked feedforward inputs. The value path avoids forming the closed
    loop transfer explicitly: one transposed triangular solve produces the
    effective gain and terminal rows together.
    """

    def __init__(self, problem: SteeringProblem, ops: BlockOperators = None):
        ops = assemble(problem) if ops is None else ops
        self.problem = problem
        self.ops = ops
        self.lam = problem.lam
        self.free_idx = np.where(ops.mask.ravel())[0]
        self.n_free = int(self.free_idx.size)
        self.n_ff = ops.horizon * ops.n_u
        self.goal_sqrt = sqrtm_psd(problem.goal.cov)
        self.goal_trace = float(np.trace(problem.goal.cov))
        self.cov_factor = ops.open_loop_cov_factor
        self.terminal_mean0 = ops.open_loop_mean[-ops.n_x :]
        self.terminal_input_map = ops.input_map[-ops.n_x :, :]

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.n_free + self.n_ff)

    def unpack(self, z: np.ndarray):
        gains = np.zeros(self.ops.mask.size)
        gains[self.free_idx] = z[: self.n_free]
        return gains.reshape(self.ops.mask.shape), z[self.n_free :]

    def policy(self, z: np.ndarray) -> HistoryPolicy:
        gains, u_ff = self.unpack(z)
        return HistoryPolicy(gains, u_ff, feedback=STATE_FEEDBACK)

    def value(self, z: np.ndarray) -> float:
        ops = self.ops
        n_x = ops.n_x
        gains, u_ff = self.unpack(z)
        dim = ops.mask.shape[1]
        n_rows = gains.shape[0]
        closure = np.eye(dim) - ops.input_map @ gains
        rhs = np.empty((dim, n_rows + n_x))
        rhs[:, :n_rows] = gains.T
        rhs[:, n_rows:] = ops.terminal_selector.T
        sol = scipy.linalg.solve_triangular(
            closure, rhs, lower=True, unit_diagonal=True, trans=1, check_finite=False
        )
        gain_rows = sol[:, :n_rows].T @ self.cov_factor
        term_rows = sol[:, n_rows:].T @ self.cov_factor
        term_cov = term_rows @ term_rows.T
        overlap_sq = np.linalg.eigvalsh(self.goal_sqrt @ term_cov @ self.goal_sqrt)
        gap = self.terminal_mean0 + self.terminal_input_map @ u_ff - self.problem.goal.mean
        return (
            float(np.sum(gain_rows * gain_rows))
            + float(u_ff @ u_ff)
            + self.lam
            * (
                float(gap @ gap)
                + float(np.trace(term_cov))
                + self.goal_trace
                - 2.0 * float(np.sum(np.sqrt(np.clip(overlap_sq, 0.0, None))))
            )
        )

    def value_and_grad(self, z: np.ndarray):
        """Analytic objective and gradient (full closed-loop factorization)."""
        ops = self.ops
        n_x = ops.n_x
        gains, u_ff = self.unpack(z)
        dim = ops.mask.shape[1]
        closure = np.eye(dim) - ops.input_map @ gains
        transfer = scipy.linalg.solve_triangular(
            closure, np.eye(dim), lower=True, unit_diagonal=True, check_finite=False
        )
        traj_cov = transfer @ ops.open_loop_cov @ transfer.T
        term_cov = traj_cov[-n_x:, -n_x:]
        vals, vecs = np.linalg.eigh(self.goal_sqrt @ term_cov @ self.goal_sqrt)
        if vals.min() <= 0.0:
            # singular overlap: the matrix square root is not differentiable
            return np.inf, None
        gains_cov = gains @ traj_cov
        gap = self.terminal_mean0 + self.terminal_input_map @ u_ff - self.problem.goal.mean
        value = (
            float(np.sum(gains_cov * gains))
            + float(u_ff @ u_ff)
            + self.lam
            * (
                float(gap @ gap)
                + float(np.trace(term_cov))
                + self.goal_trace
                - 2.0 * float(np.sum(np.sqrt(vals)))
            )
        )
        # gradient of -2 tr((Sd^1/2 Y Sd^1/2)^1/2) in Y is -W with
        # W = Sd^1/2 (Sd^1/2 Y Sd^1/2)^-1/2 Sd^1/2, pushed through L
        witness = self.goal_sqrt @ ((vecs / np.sqrt(vals)) @ vecs.T) @ self.goal_sqrt
        grad_full = 2.0 * gains_cov
        grad_full += 2.0 * ops.input_map.T @ (transfer.T @ (gains.T @ gains_cov))
        grad_full += (
            2.0
            * self.lam
            * ops.input_map.T
            @ (transfer[-n_x:, :].T @ ((np.eye(n_x) - witness) @ traj_cov[-n_x:, :]))
        )
        grad = np.concatenate(
            [
                grad_full.ravel()[self.free_idx],
                2.0 * u_ff + 2.0 * self.lam * (self.terminal_input_map.T @ gap),
            ]
        )
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return np.inf, None
        return value, grad

    def fd_value_and_grad(self, z: np.ndarray, step: float = 1e-7):
        """Forward-difference gradient: one extra value call per parameter."""
        base = self.value(z)
        if not np.isfinite(base):
            return np.inf, None
        grad = np.empty(z.size)
        for i in range(z.size):
            h = step * max(1.0, abs(z[i]))
            bumped = z.copy()
            bumped[i] += h
            grad[i] = (self.value(bumped) - base) / h
        if not np.all(np.isfinite(grad)):
            return np.inf, None
        return base, grad


def solve_wasserstein_nlp(
    problem: SteeringProblem,
    ops: BlockOperators = None,
    settings: Optional[QuasiNewtonSettings] = None,
    gradient: str = "fd",
) -> SolveReport:
    """Generic quasi-Newton solve of the history-feedback objective.

    ``gradient`` selects forward finite differences ("fd", the default) or
    the analytic gradient ("analytic").
    """
    if gradient not in ("fd", "analytic"):
        raise InvalidInputError(f"gradient must be 'fd' or 'analytic', got {gradient!r}")
    if settings is None:
        settings = QuasiNewtonSettings(max_iters=1500)
    form = WassersteinKForm(problem, ops)
    vg = form.fd_value_and_grad if gradient == "fd" else form.value_and_grad

    def guarded(z):
        with np.errstate(over="ignore", invalid="ignore"):
            return vg(z)

    started = time.perf_counter()
    result = minimize_lbfgs(guarded, form.initial_point(), settings)
    wall = time.perf_counter() - started
    policy = form.policy(result.x)
    return SolveReport(
        policy=policy,
        terminal=terminal_moments(policy, form.ops),
        objective_trace=result.trace,
        trace_times=result.trace_times,
        iterations=result.iterations,
        wall_time=wall,
        termination=result.termination,
    )


def _timed(solve: Callable[[], SolveReport], repetitions: int):
    walls = []
    report = None
    for _ in range(repetitions):
        started = time.perf_counter()
        report = solve()
        walls.append(time.perf_counter() - started)
    return float(np.median(walls)), report


def run_bench(
    problem_family: Callable[[int, float], SteeringProblem],
    n_list: Sequence[int],
    gamma_list: Sequence[float],
    solvers: Sequence[str] = (SOLVER_CCP, SOLVER_NLP),
    repetitions: int = 3,
    cost: str = "wasserstein",
    ccp_settings: Optional[CcpSettings] = None,
    qn_settings: Optional[QuasiNewtonSettings] = None,
    nlp_gradient: str = "fd",
) -> "list[BenchRecord]":
    """Median-of-``repetitions`` wall times for each (N, gamma, solver).

    ``problem_family(N, gamma)`` must build the steering instance; solvers
    run sequentially on identical instances. Individual solve failures are
    recorded on the row (``error`` field) rather than aborting the sweep.
    """
    if repetitions < 1:
        raise InvalidInputError("repetitions must be a positive integer")
    cost = cost.lower()
    if cost not in ("wasserstein", "kl"):
        raise InvalidInputError(f"unknown cost {cost!r}")
    for name in solvers:
        if name not in (SOLVER_CCP, SOLVER_NLP):
            raise InvalidInputError(f"unknown solver {name!r}")
        if name == SOLVER_CCP and cost == "kl":
            raise InvalidInputError("the CCP solver applies to the Wasserstein cost only")
    cost_label = COST_WASSERSTEIN if cost == "wasserstein" else COST_KL

    records = []
    for n in n_list:
        for gamma in gamma_list:
            problem = problem_family(int(n), float(gamma))
            ops = assemble(problem)
            ops.open_loop_cov_factor  # pay the one-time factorization before timing
            for name in solvers:
                if name == SOLVER_CCP:
                    obj = DcObjective(problem, ops)
                    solve = lambda: ccp_minimize(obj, ccp_settings or CcpSettings())
                elif cost == "wasserstein":
                    solve = lambda: solve_wasserstein_nlp(
                        problem, ops, qn_settings, gradient=nlp_gradient
                    )
                else:
                    kl_obj = KlObjective(problem, ops)
                    solve = lambda: qn_minimize(
                        kl_obj, qn_settings or QuasiNewtonSettings()
                    )
                try:
                    wall, report = _timed(solve, repetitions)
                    records.append(
                        BenchRecord(
                            solver=name,
                            cost_type=cost_label,
                            N=int(n),
                            gamma=float(gamma),
                            wall_seconds=wall,
                            iterations=report.iterations,
                            final_objective=float(report.objective_trace[-1]),
                        )
                    )
                except (CovsteerError, np.linalg.LinAlgError) as exc:
                    records.append(
                        BenchRecord(
                            solver=name,
                            cost_type=cost_label,
                            N=int(n),
                            gamma=float(gamma),
                            wall_seconds=float("nan"),
                            iterations=0,
                            final_objective=float("nan"),
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    return records


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(records: Sequence[BenchRecord], path, error_column: Optional[bool] = None):
    """Serialize bench records; the error column appears when requested or
    when any record actually failed."""
    include_error = (
        any(r.error for r in records) if error_column is None else bool(error_column)
    )
    header = CSV_FIELDS + ("error",) if include_error else CSV_FIELDS
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = [
                r.solver,
                r.cost_type,
                r.N,
                _fmt(r.gamma),
                _fmt(r.wall_seconds),
                r.iterations,
                _fmt(r.final_objective),
            ]
            if include_error:
                row.append(r.error)
            writer.writerow(row)
