"""How uncertainty evolves along the optimized trajectory.

With a soft terminal cost the controller spends little effort early,
letting the open-loop dynamics balloon the covariance, then contracts it
hard near the end of the horizon. The stage-by-stage trace of the state
covariance makes that profile visible without any plotting library.
"""

import numpy as np

from covsteer import (
    CcpSettings,
    DcObjective,
    Gaussian,
    SteeringProblem,
    assemble,
    ccp_minimize,
    stage_moments,
)

BAR_WIDTH = 56


def main():
    problem = SteeringProblem.time_invariant(
        A=np.array([[1.0, 1.0], [0.0, 1.0]]),
        B=np.array([[0.0], [1.0]]),
        G=np.eye(2),
        horizon=40,
        init=Gaussian([0.0, 1.0], 10.0 * np.eye(2)),
        goal=Gaussian([10.0, 12.0], np.eye(2)),
        lam=10.0,
        gamma=1.0,
    )
    report = ccp_minimize(DcObjective(problem), CcpSettings(epsilon=1e-5))

    _, covs = stage_moments(report.policy, assemble(problem))
    traces = np.trace(covs, axis1=1, axis2=2)

    print("stage | tr(cov) on a log scale")
    log = np.log10(traces)
    lo, hi = log.min(), log.max()
    for k, value in enumerate(traces):
        width = int(round((np.log10(value) - lo) / (hi - lo) * BAR_WIDTH))
        print(f"{k:5d} | {'#' * width:<{BAR_WIDTH}} {value:9.2f}")
    peak = int(np.argmax(traces))
    print(f"\npeak uncertainty at stage {peak} ({traces[peak]:.1f}), "
          f"terminal {traces[-1]:.2f}, goal trace {np.trace(problem.goal.cov):.2f}")


if __name__ == "__main__":
    main()
