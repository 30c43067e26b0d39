"""Same steering task, relative-entropy terminal cost.

KL divergence is dimensionless where the squared transport distance
carries squared state units, so matching behavior needs a heavier weight
(70 here vs 10 in the first demo). The KL variant is solved as a smooth
unconstrained program over stage-feedback gains with limited-memory BFGS.
"""

import numpy as np

from covsteer import (
    Gaussian,
    KlObjective,
    QuasiNewtonSettings,
    SteeringProblem,
    kl_divergence,
    qn_minimize,
)


def scenario(lam):
    return SteeringProblem.time_invariant(
        A=np.array([[1.0, 1.0], [0.0, 1.0]]),
        B=np.array([[0.0], [1.0]]),
        G=np.eye(2),
        horizon=20,
        init=Gaussian([0.0, 1.0], 10.0 * np.eye(2)),
        goal=Gaussian([10.0, 12.0], np.eye(2)),
        lam=lam,
        gamma=1.0,
    )


def main():
    for lam in (10.0, 70.0, 300.0):
        problem = scenario(lam)
        report = qn_minimize(KlObjective(problem), QuasiNewtonSettings(max_iters=1000))
        gap = kl_divergence(report.terminal, problem.goal)
        print(f"weight {lam:6.1f}: {report.termination} in {report.iterations} steps")
        print(f"  terminal covariance: {np.round(report.terminal.cov, 3).tolist()}")
        print(f"  residual divergence: {gap:.4f}")
    print(
        "Heavier weights shrink the residual, but it saturates: the noise "
        "injected on the last few stages puts a floor under the reachable "
        "terminal spread no matter how hard the controller squeezes."
    )


if __name__ == "__main__":
    main()
