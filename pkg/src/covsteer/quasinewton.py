"""Limited-memory BFGS over flat parameter vectors.

The minimizer works on plain 1-d arrays through a single callable that
returns (value, gradient).  Infeasible points are signalled by returning
(inf, None); the line search treats them as a failed sufficient-decrease
check and backtracks, so the iterates never leave the feasible region as
long as the initial point is feasible.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError, LineSearchFailedError

TERMINATION_GRAD_TOL = "GradTol"
TERMINATION_REL_F_TOL = "RelFTol"
TERMINATION_MAX_ITERS = "MaxIters"

ValueAndGrad = Callable[[np.ndarray], "tuple[float, np.ndarray | None]"]


@dataclass(frozen=True)
class QuasiNewtonSettings:
    """Knobs for the limited-memory quasi-Newton loop."""

    memory: int = 10
    grad_tol: float = 1e-6
    rel_f_tol: float = 1e-9
    max_iters: int = 500
    c1: float = 1e-4
    c2: float = 0.9

    def __post_init__(self) -> None:
        if self.memory < 1:
            raise InvalidInputError("memory must be a positive integer")
        if self.grad_tol <= 0.0 or self.rel_f_tol <= 0.0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be a positive integer")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise InvalidInputError("line search requires 0 < c1 < c2 < 1")


class QnResult(NamedTuple):
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    trace: np.ndarray
    trace_times: np.ndarray
    termination: str
    n_evals: int


class _Eval(NamedTuple):
    alpha: float
    fun: float
    grad: "np.ndarray | None"
    slope: float


def _zoom(
    phi: Callable[[float], _Eval],
    f0: float,
    slope0: float,
    lo: _Eval,
    hi: _Eval,
    c1: float,
    c2: float,
    max_iters: int = 40,
) -> "_Eval | None":
    """Nocedal/Wright zoom on the bracket [lo, hi] (bisection trial points).

    `hi` may sit at an infeasible (infinite) point; only `lo` is required to
    satisfy the sufficient-decrease condition with a finite value.
    """
    for _ in range(max_iters):
        if abs(hi.alpha - lo.alpha) <= 1e-14 * max(1.0, abs(lo.alpha)):
            break
        trial = phi(0.5 * (lo.alpha + hi.alpha))
        if not np.isfinite(trial.fun) or trial.fun > f0 + c1 * trial.alpha * slope0 or trial.fun >= lo.fun:
            hi = trial
            continue
        if abs(trial.slope) <= -c2 * slope0:
            return trial
        if trial.slope * (hi.alpha - lo.alpha) >= 0.0:
            hi = lo
        lo = trial
    # curvature unattainable in the shrunken bracket: fall back to the best
    # sufficient-decrease point so the outer loop can still make progress
    if lo.grad is not None and lo.alpha > 0.0 and np.isfinite(lo.fun):
        return lo
    return None


def _strong_wolfe(
    value_and_grad: ValueAndGrad,
    x: np.ndarray,
    direction: np.ndarray,
    f0: float,
    grad0: np.ndarray,
    c1: float,
    c2: float,
) -> "tuple[_Eval, int]":
    slope0 = float(grad0 @ direction)
    if slope0 >= 0.0:
        raise LineSearchFailedError("search direction is not a descent direction")
    n_evals = 0

    def phi(alpha: float) -> _Eval:
        nonlocal n_evals
        n_evals += 1
        fun, grad = value_and_grad(x + alpha * direction)
        slope = float(grad @ direction) if grad is not None else np.nan
        return _Eval(alpha, fun, grad, slope)

    prev = _Eval(0.0, f0, grad0, slope0)
    alpha = 1.0
    for attempt in range(25):
        cur = phi(alpha)
        if not np.isfinite(cur.fun) or cur.fun > f0 + c1 * alpha * slope0 or (attempt > 0 and cur.fun >= prev.fun):
            found = _zoom(phi, f0, slope0, prev, cur, c1, c2)
            break
        if abs(cur.slope) <= -c2 * slope0:
            found = cur
            break
        if cur.slope >= 0.0:
            found = _zoom(phi, f0, slope0, cur, prev, c1, c2)
            break
        prev = cur
        alpha *= 2.0
    else:
        found = None

    if found is None:
        raise LineSearchFailedError(
            f"no acceptable step along the search direction (f0={f0:.6e}, slope0={slope0:.3e})"
        )
    return found, n_evals


def minimize_lbfgs(
    value_and_grad: ValueAndGrad,
    x0: np.ndarray,
    settings: QuasiNewtonSettings = QuasiNewtonSettings(),
) -> QnResult:
    """Minimize a smooth function with L-BFGS and a strong Wolfe line search.

    Returns the final iterate together with the per-iteration objective
    trace; termination is one of GradTol, RelFTol, MaxIters.  Raises
    LineSearchFailedError only when no decrease is achievable even along
    the raw negative gradient.
    """
    x = np.array(x0, dtype=float).ravel()
    fun, grad = value_and_grad(x)
    if grad is None or not np.isfinite(fun):
        raise InvalidInputError("initial point is infeasible")
    grad = np.asarray(grad, dtype=float)

    pairs: deque = deque(maxlen=settings.memory)
    trace = [fun]
    times = [0.0]
    started = time.perf_counter()
    n_evals = 1
    termination = TERMINATION_MAX_ITERS
    iterations = 0

    for _ in range(settings.max_iters):
        if np.linalg.norm(grad) <= settings.grad_tol:
            termination = TERMINATION_GRAD_TOL
            break

        direction = -_two_loop(grad, pairs)
        if float(grad @ direction) >= 0.0:
            # stale curvature pairs produced an ascent direction; reset
            pairs.clear()
            direction = -grad

        try:
            step, evals = _strong_wolfe(
                value_and_grad, x, direction, fun, grad, settings.c1, settings.c2
            )
        except LineSearchFailedError:
            if not pairs:
                raise
            pairs.clear()
            step, evals = _strong_wolfe(
                value_and_grad, x, -grad, fun, grad, settings.c1, settings.c2
            )
            direction = -grad
        n_evals += evals

        assert step.grad is not None
        s = step.alpha * direction
        y = step.grad - grad
        ys = float(s @ y)
        if ys > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / ys))

        rel_drop = abs(fun - step.fun) / max(abs(step.fun), 1.0)
        x = x + s
        fun, grad = step.fun, step.grad
        iterations += 1
        trace.append(fun)
        times.append(time.perf_counter() - started)
        if rel_drop <= settings.rel_f_tol:
            termination = TERMINATION_REL_F_TOL
            break
    else:
        termination = TERMINATION_MAX_ITERS

    return QnResult(
        x=x,
        fun=fun,
        grad=grad,
        iterations=iterations,
        trace=np.asarray(trace),
        trace_times=np.asarray(times),
        termination=termination,
        n_evals=n_evals,
    )


def _two_loop(grad: np.ndarray, pairs: deque) -> np.ndarray:
    """Implicit H·g product from the stored (s, y) curvature pairs."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q
