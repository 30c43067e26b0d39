"""Monte Carlo rollout of synthesized policies on the raw dynamics.

Rollouts intentionally avoid the lifted operators for state propagation:
they step ``x+ = A x + B u + G w`` directly, so sample moments act as an
independent check on the analytic moment algebra.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamplesError, InvalidInputError
from .gaussians import Gaussian
from .steering import (
    DISTURBANCE_FEEDBACK,
    BlockOperators,
    HistoryPolicy,
    MemorylessPolicy,
    SteeringProblem,
    assemble,
    state_from_disturbance,
)


@dataclass(frozen=True)
class RolloutBatch:
    """Sampled closed-loop trajectories and the inputs that produced them.

    ``trajectories`` has shape (n_paths, N+1, n_x) and ``inputs``
    (n_paths, N, n_u); identical (seed, policy, problem) triples reproduce
    both arrays bit for bit.
    """

    seed: int
    n_paths: int
    trajectories: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        if self.n_paths < 1:
            raise InvalidInputError("n_paths must be a positive integer")
        if self.trajectories.shape[0] != self.n_paths or self.inputs.shape[0] != self.n_paths:
            raise InvalidInputError("array leading dimensions must equal n_paths")

    @property
    def horizon(self) -> int:
        return self.inputs.shape[1]


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    # eigen factor handles PSD (possibly singular) covariances
    values, vectors = np.linalg.eigh(cov)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def rollout(
    policy,
    problem: SteeringProblem,
    seed: int,
    n_paths: int,
    ops: BlockOperators = None,
) -> RolloutBatch:
    """Simulate ``n_paths`` closed-loop sample paths under a policy.

    Draws x0 ~ N(init) and w_k ~ N(0, gamma I) from one counter-based
    Philox stream in fixed-shape blocks, so results are independent of how
    the paths might later be processed in parallel. Controls apply feedback
    to deviations from the analytic mean trajectory; disturbance-form
    gains are converted to state form first (the two laws are equivalent).
    """
    if n_paths < 1:
        raise InvalidInputError("n_paths must be a positive integer")
    if ops is None:
        ops = assemble(problem)
    sys = problem.system
    n, n_x, n_u, n_w = ops.horizon, ops.n_x, ops.n_u, ops.n_w

    stage_gains = None
    full_gains = None
    if isinstance(policy, MemorylessPolicy):
        policy.embed(ops)  # shape validation against this problem
        stage_gains = policy.gains
    elif isinstance(policy, HistoryPolicy):
        if policy.feedback == DISTURBANCE_FEEDBACK:
            full_gains = state_from_disturbance(policy.gains, ops)
        else:
            from .steering import check_mask

            full_gains = check_mask(policy.gains, ops)
    else:
        raise InvalidInputError(f"unsupported policy type {type(policy).__name__}")

    mean_traj = (ops.open_loop_mean + ops.input_map @ policy.u_ff).reshape(n + 1, n_x)

    rng = np.random.Generator(np.random.Philox(seed))
    x0 = problem.init.mean + rng.standard_normal((n_paths, n_x)) @ _psd_factor(problem.init.cov).T
    noise = np.sqrt(problem.gamma) * rng.standard_normal((n_paths, n, n_w))

    states = np.empty((n_paths, n + 1, n_x))
    inputs = np.empty((n_paths, n, n_u))
    states[:, 0, :] = x0
    deviations = np.empty((n_paths, (n + 1) * n_x)) if full_gains is not None else None

    for k in range(n):
        dev_k = states[:, k, :] - mean_traj[k]
        u_ff_k = policy.u_ff[k * n_u : (k + 1) * n_u]
        if stage_gains is not None:
            u = dev_k @ stage_gains[k].T + u_ff_k
        else:
            deviations[:, k * n_x : (k + 1) * n_x] = dev_k
            block = full_gains[k * n_u : (k + 1) * n_u, : (k + 1) * n_x]
            u = deviations[:, : (k + 1) * n_x] @ block.T + u_ff_k
        inputs[:, k, :] = u
        states[:, k + 1, :] = (
            states[:, k, :] @ sys.A[k].T + u @ sys.B[k].T + noise[:, k, :] @ sys.G[k].T
        )

    return RolloutBatch(seed=int(seed), n_paths=n_paths, trajectories=states, inputs=inputs)


def empirical_moments(batch: RolloutBatch, stage: int) -> Gaussian:
    """Sample mean and unbiased sample covariance of the state at a stage."""
    if batch.n_paths < 2:
        raise InsufficientSamplesError(
            f"need at least 2 paths for a sample covariance, got {batch.n_paths}"
        )
    if not 0 <= stage <= batch.horizon:
        raise InvalidInputError(f"stage {stage} outside 0..{batch.horizon}")
    x = batch.trajectories[:, stage, :]
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return Gaussian(x.mean(axis=0), cov, require_pd=False)
