"""Covariance steering of discrete-time stochastic linear systems.

Synthesizes affine feedback policies that drive the state distribution of
``x+ = A x + B u + G w`` toward a goal Gaussian over a finite horizon,
trading expected control energy against a soft terminal cost: squared
Wasserstein distance (solved by a convex-concave procedure over
disturbance-feedback gains) or KL divergence (solved by quasi-Newton
descent over per-stage feedback).
"""

from .bench import (
    BenchRecord,
    CSV_FIELDS,
    WassersteinKForm,
    run_bench,
    solve_wasserstein_nlp,
    write_csv,
)
from .cli import load_policy, save_policy
from .ccp import (
    CcpSettings,
    CostTerms,
    DcObjective,
    SolveReport,
    TERMINATION_CONVERGED,
    TERMINATION_GRAD_TOL,
    TERMINATION_MAX_ITERS,
    TERMINATION_REL_F_TOL,
    ccp_minimize,
    eval_terms,
    overlap_subgradient,
    solve_mean_subproblem,
    surrogate_value,
)
from .config import ScenarioConfig, apply_overrides, load_config, parse_config
from .errors import (
    ConfigError,
    ConsistencyError,
    CovsteerError,
    DimMismatchError,
    InnerSolveFailedError,
    InsufficientSamplesError,
    InvalidInputError,
    LineSearchFailedError,
    NotPositiveDefiniteError,
    NotPsdError,
    StructureViolationError,
)
from .gaussians import Gaussian, confidence_ellipse, kl_divergence, wasserstein_sq
from .klnlp import KlGradient, KlObjective, kl_gradient, kl_objective, qn_minimize
from .matfun import (
    eig_sym,
    logdet_pd,
    nuclear_norm,
    nuclear_norm_subgradient,
    sqrtm_psd,
    svd,
    symmetrize,
)
from .quasinewton import QnResult, QuasiNewtonSettings, minimize_lbfgs
from .simulate import RolloutBatch, empirical_moments, rollout
from .steering import (
    BlockOperators,
    DISTURBANCE_FEEDBACK,
    HistoryPolicy,
    LtvSystem,
    MemorylessPolicy,
    STATE_FEEDBACK,
    SteeringProblem,
    assemble,
    check_mask,
    disturbance_from_state,
    expected_control_energy,
    stage_moments,
    state_from_disturbance,
    terminal_moments,
)

__version__ = "0.1.0"

__all__ = [
    "BenchRecord",
    "BlockOperators",
    "CSV_FIELDS",
    "CcpSettings",
    "ConfigError",
    "ConsistencyError",
    "CostTerms",
    "CovsteerError",
    "DISTURBANCE_FEEDBACK",
    "DcObjective",
    "DimMismatchError",
    "Gaussian",
    "HistoryPolicy",
    "InnerSolveFailedError",
    "InsufficientSamplesError",
    "InvalidInputError",
    "KlGradient",
    "KlObjective",
    "LineSearchFailedError",
    "LtvSystem",
    "MemorylessPolicy",
    "NotPositiveDefiniteError",
    "NotPsdError",
    "QnResult",
    "QuasiNewtonSettings",
    "RolloutBatch",
    "STATE_FEEDBACK",
    "ScenarioConfig",
    "SolveReport",
    "SteeringProblem",
    "StructureViolationError",
    "TERMINATION_CONVERGED",
    "TERMINATION_GRAD_TOL",
    "TERMINATION_MAX_ITERS",
    "TERMINATION_REL_F_TOL",
    "WassersteinKForm",
    "apply_overrides",
    "assemble",
    "ccp_minimize",
    "check_mask",
    "confidence_ellipse",
    "disturbance_from_state",
    "eig_sym",
    "empirical_moments",
    "eval_terms",
    "expected_control_energy",
    "kl_divergence",
    "kl_gradient",
    "kl_objective",
    "load_config",
    "load_policy",
    "logdet_pd",
    "minimize_lbfgs",
    "nuclear_norm",
    "nuclear_norm_subgradient",
    "overlap_subgradient",
    "parse_config",
    "qn_minimize",
    "rollout",
    "run_bench",
    "save_policy",
    "solve_mean_subproblem",
    "solve_wasserstein_nlp",
    "sqrtm_psd",
    "stage_moments",
    "state_from_disturbance",
    "surrogate_value",
    "svd",
    "symmetrize",
    "terminal_moments",
    "wasserstein_sq",
    "write_csv",
]
