"""Acceptance gate: one test per shipped guarantee, run with ``pytest -v``
so every criterion prints its own pass/fail line.

Two criteria encode published terminal-covariance boxes for the benchmark
scenario that this solver cannot meet, and they fail honestly rather than
being skipped or loosened:

* Criterion 1 expects the leading terminal variance near 2.81. Causality
  forces var(x1 at stage N) >= 3*gamma for this double integrator (the
  last two noise injections reach x1 through three independent channels
  no control can cancel), so with gamma=1 the box center is unreachable
  by any policy. The initialization-robust optimum at the stated weight
  lands at [[3.32, 0.04], [0.04, 1.51]].
* Criterion 2 expects [[3.65, 0.06], [0.06, 2.21]] within 0.4 for the
  KL-weighted variant. The optimizer's fixed point, stable across
  initializations and solver settings, is [[3.02, 0.03], [0.03, 1.15]];
  the (1,1) entry alone misses the box by more than 0.6.

The remaining nine criteria pass. Criterion 4 times full solver sweeps up
to horizon 50 and dominates the suite's runtime (tens of minutes).
"""

import time

import numpy as np
import pytest

from covsteer import (
    CcpSettings,
    DISTURBANCE_FEEDBACK,
    DcObjective,
    Gaussian,
    HistoryPolicy,
    KlObjective,
    MemorylessPolicy,
    assemble,
    ccp_minimize,
    disturbance_from_state,
    empirical_moments,
    eval_terms,
    expected_control_energy,
    kl_divergence,
    kl_gradient,
    kl_objective,
    overlap_subgradient,
    qn_minimize,
    rollout,
    run_bench,
    stage_moments,
    state_from_disturbance,
    surrogate_value,
    terminal_moments,
    wasserstein_sq,
)
from conftest import double_integrator
from helpers import random_masked, random_problem, random_spd


def _fmt(matrix) -> str:
    return np.array2string(np.asarray(matrix), precision=3, suppress_small=True)


def test_criterion_01_wasserstein_terminal_covariance():
    """Benchmark scenario, squared-distance cost: S_N within 0.3 of the
    published box, solved in under 60 s."""
    problem = double_integrator()  # N=20, gamma=1, weight 10
    start = time.perf_counter()
    report = ccp_minimize(DcObjective(problem), CcpSettings(epsilon=1e-5))
    wall = time.perf_counter() - start
    assert wall <= 60.0, f"solve took {wall:.1f} s, limit 60 s"

    target = np.array([[2.81, 0.19], [0.19, 1.98]])
    deviation = np.abs(report.terminal.cov - target)
    assert float(deviation.max()) <= 0.3, (
        f"terminal covariance {_fmt(report.terminal.cov)} is off the target "
        f"{_fmt(target)} by up to {deviation.max():.3f} (allowed 0.3). "
        "The optimum is initialization-robust (criterion 3) and the target's "
        "leading variance sits below the causal floor 3*gamma; see the module "
        "docstring."
    )


def test_criterion_02_kl_terminal_covariance():
    """Same scenario with the KL cost at weight 70: S_N within 0.4 of the
    published box, solved in under 120 s."""
    problem = double_integrator(lam=70.0)
    start = time.perf_counter()
    report = qn_minimize(KlObjective(problem))
    wall = time.perf_counter() - start
    assert wall <= 120.0, f"solve took {wall:.1f} s, limit 120 s"

    target = np.array([[3.65, 0.06], [0.06, 2.21]])
    deviation = np.abs(report.terminal.cov - target)
    assert float(deviation.max()) <= 0.4, (
        f"terminal covariance {_fmt(report.terminal.cov)} is off the target "
        f"{_fmt(target)} by up to {deviation.max():.3f} (allowed 0.4). "
        "The fixed point is initialization-robust (criterion 3); see the "
        "module docstring."
    )


def test_criterion_03_initialization_robustness():
    """10 random starts per cost type land within 1% of each other."""
    rng = np.random.default_rng(603)

    problem = double_integrator()
    obj = DcObjective(problem)
    ops = obj.ops
    w_vals = []
    for i in range(10):
        init = (
            None
            if i == 0
            else HistoryPolicy(
                random_masked(rng, ops, scale=0.5),
                np.zeros(ops.horizon * ops.n_u),
                feedback=DISTURBANCE_FEEDBACK,
            )
        )
        w_vals.append(
            ccp_minimize(obj, CcpSettings(epsilon=1e-5), init=init).objective_trace[-1]
        )
    spread = (max(w_vals) - min(w_vals)) / abs(min(w_vals))
    assert spread <= 0.01, f"distance-cost objectives spread {spread:.2e}"

    kl_problem = double_integrator(lam=70.0)
    kl_obj = KlObjective(kl_problem)
    system = kl_problem.system
    kl_vals = []
    for i in range(10):
        init = (
            None
            if i == 0
            else MemorylessPolicy(
                0.3 * rng.normal(size=(system.horizon, system.n_u, system.n_x)),
                0.5 * rng.normal(size=system.horizon * system.n_u),
            )
        )
        kl_vals.append(qn_minimize(kl_obj, init=init).objective_trace[-1])
    spread = (max(kl_vals) - min(kl_vals)) / abs(min(kl_vals))
    assert spread <= 0.01, f"KL-cost objectives spread {spread:.2e}"


def test_criterion_04_structured_solver_beats_generic():
    """Horizons 20..50 at two noise levels: the majorize-minimize solver is
    strictly faster than the generic quasi-Newton solve of the same instance,
    and both land within 2% of each other's objective. Wall times are
    hardware-dependent, so only the ordering is asserted."""
    records = run_bench(
        lambda n, gamma: double_integrator(horizon=n, gamma=gamma),
        n_list=[20, 30, 40, 50],
        gamma_list=[1.0, 0.5],
        repetitions=1,
    )
    by_instance = {}
    for r in records:
        assert r.error == "", f"N={r.N} gamma={r.gamma} {r.solver}: {r.error}"
        by_instance.setdefault((r.N, r.gamma), {})[r.solver] = r
    assert len(by_instance) == 8
    for (n, gamma), pair in sorted(by_instance.items()):
        ccp, nlp = pair["CCP"], pair["NLP"]
        assert ccp.wall_seconds < nlp.wall_seconds, (
            f"N={n} gamma={gamma}: structured {ccp.wall_seconds:.2f} s vs "
            f"generic {nlp.wall_seconds:.2f} s"
        )
        gap = abs(ccp.final_objective - nlp.final_objective) / max(
            abs(ccp.final_objective), abs(nlp.final_objective)
        )
        assert gap <= 0.02, f"N={n} gamma={gamma}: objective gap {gap:.2e}"


def test_criterion_05_objective_decomposition_consistency():
    """200 random problems: the four-term split equals control energy plus
    weighted squared distance computed by moment propagation, to 1e-8."""
    rng = np.random.default_rng(605)
    for _ in range(200):
        problem = random_problem(rng)
        obj = DcObjective(problem)
        ops = obj.ops
        theta = random_masked(rng, ops, scale=0.6)
        u_ff = rng.normal(size=ops.horizon * ops.n_u)

        total = eval_terms(u_ff, theta, obj).total

        policy = HistoryPolicy(theta, u_ff, feedback=DISTURBANCE_FEEDBACK)
        energy = expected_control_energy(policy, ops)
        terminal = terminal_moments(policy, ops)
        reference = energy + problem.lam * wasserstein_sq(terminal, problem.goal)
        assert abs(total - reference) <= 1e-8 * max(1.0, abs(reference))


def test_criterion_06_monotone_descent_and_surrogate_bound():
    """Every solve descends (slack 1e-9); each sampled linearization upper
    bounds the true objective at 100 random probe points."""
    rng = np.random.default_rng(606)
    solves = [double_integrator()] + [random_problem(rng) for _ in range(24)]
    for problem in solves:
        trace = np.asarray(ccp_minimize(DcObjective(problem)).objective_trace)
        increases = np.diff(trace)
        assert increases.max(initial=-np.inf) <= 1e-9, (
            f"objective increased by {increases.max():.2e}"
        )

    for _ in range(5):
        problem = random_problem(rng)
        obj = DcObjective(problem)
        theta_ref = random_masked(rng, obj.ops, scale=0.5)
        sub = overlap_subgradient(theta_ref, obj)

        def true_gain_part(theta):
            terms = eval_terms(np.zeros(obj.ops.horizon * obj.ops.n_u), theta, obj)
            return terms.effort_term + terms.trace_term - terms.overlap_term

        for _ in range(100):
            probe = random_masked(rng, obj.ops, scale=1.0)
            truth = true_gain_part(probe)
            bound = surrogate_value(probe, sub, theta_ref, obj)
            assert bound - truth >= -1e-9 * max(1.0, abs(truth))


def test_criterion_07_kl_gradient_matches_finite_differences():
    """Analytic gradient vs central differences at 20 random feasible
    points, horizons up to 5, relative error at most 1e-5."""
    rng = np.random.default_rng(607)
    for _ in range(20):
        problem = random_problem(rng, horizon=int(rng.integers(2, 6)))
        obj = KlObjective(problem)
        system = problem.system
        policy = MemorylessPolicy(
            0.3 * rng.normal(size=(system.horizon, system.n_u, system.n_x)),
            rng.normal(size=system.horizon * system.n_u),
        )
        analytic = kl_gradient(policy, obj).ravel()

        z0 = np.concatenate([policy.gains.ravel(), policy.u_ff])
        n_gain = policy.gains.size

        def value(z):
            pol = MemorylessPolicy(
                z[:n_gain].reshape(system.horizon, system.n_u, system.n_x),
                z[n_gain:],
            )
            return kl_objective(pol, obj)

        fd = np.zeros_like(z0)
        for i in range(z0.size):
            h = 1e-6 * max(1.0, abs(z0[i]))
            zp, zm = z0.copy(), z0.copy()
            zp[i] += h
            zm[i] -= h
            fd[i] = (value(zp) - value(zm)) / (2.0 * h)
        err = np.linalg.norm(fd - analytic) / max(1.0, np.linalg.norm(analytic))
        assert err <= 1e-5


def test_criterion_08_gain_transform_bijection():
    """200 random masked matrices: transform roundtrip to 1e-10 and the
    causality pattern preserved to 1e-12 in both directions."""
    rng = np.random.default_rng(608)
    for _ in range(200):
        ops = assemble(random_problem(rng))

        k = random_masked(rng, ops, scale=0.7)
        theta = disturbance_from_state(k, ops)
        assert np.max(np.abs(theta[~ops.mask])) <= 1e-12
        back = state_from_disturbance(theta, ops)
        assert np.max(np.abs(back[~ops.mask])) <= 1e-12
        assert np.max(np.abs(back - k)) <= 1e-10 * max(1.0, np.max(np.abs(k)))

        theta0 = random_masked(rng, ops, scale=0.7)
        k0 = state_from_disturbance(theta0, ops)
        roundtrip = disturbance_from_state(k0, ops)
        assert np.max(np.abs(roundtrip - theta0)) <= 1e-10 * max(
            1.0, np.max(np.abs(theta0))
        )


def test_criterion_09_monte_carlo_agreement(w_solution):
    """100000 rollouts of the solved benchmark policy: empirical terminal
    covariance within 5% relative Frobenius error, empirical mean within the
    3-sigma central-limit band per coordinate."""
    problem, report = w_solution
    ops = assemble(problem)
    n_paths = 100_000
    batch = rollout(report.policy, problem, 20260816, n_paths, ops)
    empirical = empirical_moments(batch, ops.horizon)

    analytic = report.terminal
    frob = np.linalg.norm(empirical.cov - analytic.cov) / np.linalg.norm(analytic.cov)
    assert frob <= 0.05, f"covariance relative Frobenius error {frob:.3f}"

    clt = 3.0 * np.sqrt(np.trace(analytic.cov) / n_paths)
    gap = np.abs(empirical.mean - analytic.mean)
    assert np.all(gap <= clt), f"mean gaps {gap} exceed CLT band {clt:.4f}"


def test_criterion_10_divergence_sanity():
    """500 random Gaussian pairs: squared distance is symmetric and vanishes
    on identical pairs; KL is nonnegative and zero only on identical pairs
    (all to 1e-8). The scalar KL closed form matches quadrature to 1e-4."""
    rng = np.random.default_rng(610)
    for _ in range(500):
        n = int(rng.integers(1, 5))
        a = Gaussian(rng.normal(size=n), random_spd(rng, n))
        b = Gaussian(rng.normal(size=n), random_spd(rng, n))

        w_ab = wasserstein_sq(a, b)
        assert abs(w_ab - wasserstein_sq(b, a)) <= 1e-8 * max(1.0, abs(w_ab))
        assert abs(wasserstein_sq(a, a)) <= 1e-8

        assert kl_divergence(a, b) >= -1e-8
        assert kl_divergence(a, b) > 1e-8  # distinct pairs separate
        assert abs(kl_divergence(a, a)) <= 1e-8

    cases = [(0.0, 1.0, 0.0, 1.0), (0.3, 1.2, -0.4, 0.8), (1.0, 0.5, 0.0, 2.0)]
    for m1, v1, m2, v2 in cases:
        p = Gaussian([m1], [[v1]])
        q = Gaussian([m2], [[v2]])
        span = 12.0 * np.sqrt(max(v1, v2))
        x = np.linspace(min(m1, m2) - span, max(m1, m2) + span, 200001)
        logp = -0.5 * ((x - m1) ** 2 / v1 + np.log(2.0 * np.pi * v1))
        logq = -0.5 * ((x - m2) ** 2 / v2 + np.log(2.0 * np.pi * v2))
        numeric = float(np.trapezoid(np.exp(logp) * (logp - logq), x))
        assert kl_divergence(p, q) == pytest.approx(numeric, abs=1e-4)


def test_criterion_11_uncertainty_grows_then_shrinks():
    """Long-horizon scenario: some intermediate covariance trace exceeds the
    terminal one, the signature of steering that lets uncertainty balloon
    before squeezing it into the goal."""
    problem = double_integrator(horizon=40)
    report = ccp_minimize(DcObjective(problem), CcpSettings(epsilon=1e-5))
    _, covs = stage_moments(report.policy, assemble(problem))
    traces = np.trace(covs, axis1=1, axis2=2)
    assert traces[1:-1].max() > traces[-1], (
        f"max intermediate trace {traces[1:-1].max():.2f} vs terminal "
        f"{traces[-1]:.2f}"
    )
