"""Random problem factory shared by the property-test suites."""

import numpy as np

from covsteer import Gaussian, LtvSystem, SteeringProblem


def random_spd(rng, n, floor=0.3):
    m = rng.normal(size=(n, n))
    return m @ m.T + floor * np.eye(n)


def random_problem(rng, horizon=None, n_x=None, n_u=None, n_w=None, lam=None, gamma=None):
    """Small random time-varying steering problem.

    Dimensions default to horizon <= 6, n_x <= 3 so dense reference
    computations stay cheap. Dynamics are scaled to keep state growth mild
    over the horizon. Note n_w < n_x makes the lifted open-loop covariance
    singular, which is a regime worth fuzzing on purpose.
    """
    if horizon is None:
        horizon = int(rng.integers(2, 7))
    if n_x is None:
        n_x = int(rng.integers(1, 4))
    if n_u is None:
        n_u = int(rng.integers(1, n_x + 1))
    if n_w is None:
        n_w = int(rng.integers(1, n_x + 1))
    A = rng.normal(size=(horizon, n_x, n_x)) / np.sqrt(n_x)
    B = rng.normal(size=(horizon, n_x, n_u))
    G = rng.normal(size=(horizon, n_x, n_w))
    init = Gaussian(rng.normal(size=n_x), random_spd(rng, n_x))
    goal = Gaussian(rng.normal(size=n_x), random_spd(rng, n_x))
    if lam is None:
        lam = float(10.0 ** rng.uniform(-1.0, 1.5))
    if gamma is None:
        gamma = float(rng.uniform(0.3, 2.0))
    return SteeringProblem(LtvSystem(A, B, G), init, goal, lam, gamma)


def random_masked(rng, ops, scale=1.0):
    """Random gain matrix supported exactly on the causality mask."""
    return np.where(ops.mask, scale * rng.normal(size=ops.mask.shape), 0.0)
