"""Shared fixtures: the double-integrator benchmark scenario and a cached solve.

The expensive Wasserstein-cost solve is session-scoped so the acceptance
tests and the Monte Carlo tests reuse one solution instead of re-solving.
"""

import numpy as np
import pytest

from covsteer import (
    CcpSettings,
    DcObjective,
    Gaussian,
    SteeringProblem,
    ccp_minimize,
)


def double_integrator(horizon=20, gamma=1.0, lam=10.0):
    """Position/velocity chain with wide initial spread and a far-away goal."""
    return SteeringProblem.time_invariant(
        A=[[1.0, 1.0], [0.0, 1.0]],
        B=[[0.0], [1.0]],
        G=np.eye(2),
        horizon=horizon,
        init=Gaussian([0.0, 1.0], 10.0 * np.eye(2), require_pd=False),
        goal=Gaussian([10.0, 12.0], np.eye(2)),
        lam=lam,
        gamma=gamma,
    )


@pytest.fixture(scope="session")
def w_solution():
    """(problem, report) for the Wasserstein cost on the N=20 scenario."""
    problem = double_integrator()
    report = ccp_minimize(DcObjective(problem), CcpSettings(epsilon=1e-5))
    return problem, report
