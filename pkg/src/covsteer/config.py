"""Scenario configuration documents (YAML, schema version 1).

Document shape::

    version: 1
    cost: wasserstein            # or: kl
    horizon: 20
    lambda: 10.0
    gamma: 1.0
    seed: 0
    system:
      n_x: 2
      n_u: 1
      n_w: 2
      A: [[1, 1], [0, 1]]        # row-major; a flat list of n_x*n_x works too
      B: [[0], [1]]
      G: [[1, 0], [0, 1]]
    init: {mean: [0, 1], cov: [[10, 0], [0, 10]]}
    goal: {mean: [10, 12], cov: [[1, 0], [0, 1]]}
    solver: {epsilon: 1.0e-5}    # optional; keys depend on the cost type

A time-varying system replaces A/B/G with ``stages``, a list of exactly
``horizon`` mappings each holding A, B, G. Validation failures raise
ConfigError naming the offending field by dotted path (``goal.cov``).
Overrides (``--set key=value``) rewrite the document before parsing, so
they behave exactly like editing the file.
"""

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import yaml

from .ccp import CcpSettings
from .errors import ConfigError, CovsteerError
from .gaussians import Gaussian
from .quasinewton import QuasiNewtonSettings
from .steering import LtvSystem, SteeringProblem

COST_WASSERSTEIN = "wasserstein"
COST_KL = "kl"

_TOP_KEYS = {"version", "cost", "horizon", "lambda", "gamma", "seed", "system", "init", "goal", "solver"}
_SYSTEM_KEYS = {"n_x", "n_u", "n_w", "A", "B", "G", "stages"}
_GAUSS_KEYS = {"mean", "cov"}
_CCP_KEYS = {"epsilon", "max_iters", "inner_tol", "inner_max_iters"}
_QN_KEYS = {"memory", "grad_tol", "rel_f_tol", "max_iters", "c1", "c2"}


@dataclass(frozen=True)
class ScenarioConfig:
    """A parsed, validated scenario: problem + cost type + solver settings."""

    cost: str
    problem: SteeringProblem
    seed: int
    solver_settings: Union[CcpSettings, QuasiNewtonSettings]


def _mapping(node, field):
    if not isinstance(node, dict):
        raise ConfigError(f"{field}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set, field: str):
    unknown = sorted(set(node) - allowed)
    if unknown:
        prefix = f"{field}." if field else ""
        raise ConfigError(f"{prefix}{unknown[0]}: unknown field")


def _get(node: dict, key: str, field: str):
    if key not in node or node[key] is None:
        prefix = f"{field}." if field else ""
        raise ConfigError(f"{prefix}{key}: missing required field")
    return node[key]


def _number(value, field, positive=False) -> float:
    # YAML's float grammar treats 1e-6 (no dot) as a string; accept those
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"{field}: expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field}: expected a number, got {value!r}")
    out = float(value)
    if not np.isfinite(out):
        raise ConfigError(f"{field}: must be finite")
    if positive and out <= 0:
        raise ConfigError(f"{field}: must be positive")
    return out


def _integer(value, field, minimum=None) -> int:
    if isinstance(value, str):
        try:
            value = int(value)
        except ValueError:
            raise ConfigError(f"{field}: expected an integer, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{field}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{field}: must be >= {minimum}")
    return value


def _vector(value, n, field) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a numeric vector") from None
    if arr.shape != (n,):
        raise ConfigError(f"{field}: expected {n} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{field}: contains non-finite entries")
    return arr


def _matrix(value, rows, cols, field) -> np.ndarray:
    """Row-major matrix: nested rows or a flat list of rows*cols numbers."""
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a numeric matrix") from None
    if arr.ndim == 1 and arr.size == rows * cols:
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ConfigError(f"{field}: expected shape {rows}x{cols} (row-major), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{field}: contains non-finite entries")
    return arr


def _gaussian(node, n_x, field, require_pd) -> Gaussian:
    node = _mapping(node, field)
    _reject_unknown(node, _GAUSS_KEYS, field)
    mean = _vector(_get(node, "mean", field), n_x, f"{field}.mean")
    cov = _matrix(_get(node, "cov", field), n_x, n_x, f"{field}.cov")
    try:
        return Gaussian(mean, cov, require_pd=require_pd)
    except CovsteerError as exc:
        raise ConfigError(f"{field}.cov: {exc}") from exc


def _system(node, horizon) -> LtvSystem:
    node = _mapping(node, "system")
    _reject_unknown(node, _SYSTEM_KEYS, "system")
    n_x = _integer(_get(node, "n_x", "system"), "system.n_x", minimum=1)
    n_u = _integer(_get(node, "n_u", "system"), "system.n_u", minimum=1)
    n_w = _integer(_get(node, "n_w", "system"), "system.n_w", minimum=1)

    if "stages" in node and node["stages"] is not None:
        for key in ("A", "B", "G"):
            if key in node:
                raise ConfigError(f"system.{key}: not allowed alongside system.stages")
        stages = node["stages"]
        if not isinstance(stages, list) or len(stages) != horizon:
            raise ConfigError(
                f"system.stages: expected a list of exactly {horizon} stage mappings"
            )
        A = np.empty((horizon, n_x, n_x))
        B = np.empty((horizon, n_x, n_u))
        G = np.empty((horizon, n_x, n_w))
        for k, stage in enumerate(stages):
            stage = _mapping(stage, f"system.stages[{k}]")
            _reject_unknown(stage, {"A", "B", "G"}, f"system.stages[{k}]")
            A[k] = _matrix(_get(stage, "A", f"system.stages[{k}]"), n_x, n_x, f"system.stages[{k}].A")
            B[k] = _matrix(_get(stage, "B", f"system.stages[{k}]"), n_x, n_u, f"system.stages[{k}].B")
            G[k] = _matrix(_get(stage, "G", f"system.stages[{k}]"), n_x, n_w, f"system.stages[{k}].G")
        return LtvSystem(A, B, G)

    A = _matrix(_get(node, "A", "system"), n_x, n_x, "system.A")
    B = _matrix(_get(node, "B", "system"), n_x, n_u, "system.B")
    G = _matrix(_get(node, "G", "system"), n_x, n_w, "system.G")
    return LtvSystem.time_invariant(A, B, G, horizon)


def _solver_settings(node, cost) -> Union[CcpSettings, QuasiNewtonSettings]:
    node = _mapping(node, "solver") if node is not None else {}
    allowed = _CCP_KEYS if cost == COST_WASSERSTEIN else _QN_KEYS
    _reject_unknown(node, allowed, "solver")
    kwargs = {}
    for key, value in node.items():
        if value is None:
            continue
        if key in ("max_iters", "memory"):
            kwargs[key] = _integer(value, f"solver.{key}", minimum=1)
        elif key == "inner_max_iters":
            kwargs[key] = _integer(value, f"solver.{key}", minimum=1)
        else:
            kwargs[key] = _number(value, f"solver.{key}", positive=True)
    try:
        if cost == COST_WASSERSTEIN:
            return CcpSettings(**kwargs)
        return QuasiNewtonSettings(**kwargs)
    except CovsteerError as exc:
        raise ConfigError(f"solver: {exc}") from exc


def parse_config(doc) -> ScenarioConfig:
    """Validate a loaded YAML document and build the scenario it describes."""
    doc = _mapping(doc, "config")
    _reject_unknown(doc, _TOP_KEYS, "")
    version = _get(doc, "version", "")
    if version != 1:
        raise ConfigError(f"version: unsupported schema version {version!r} (expected 1)")

    cost = _get(doc, "cost", "")
    if not isinstance(cost, str) or cost.lower() not in (COST_WASSERSTEIN, COST_KL):
        raise ConfigError(f"cost: expected 'wasserstein' or 'kl', got {cost!r}")
    cost = cost.lower()

    horizon = _integer(_get(doc, "horizon", ""), "horizon", minimum=1)
    lam = _number(_get(doc, "lambda", ""), "lambda", positive=True)
    gamma = _number(doc.get("gamma", 1.0), "gamma", positive=True)
    seed = _integer(doc.get("seed", 0), "seed")

    system = _system(_get(doc, "system", ""), horizon)
    init = _gaussian(_get(doc, "init", ""), system.n_x, "init", require_pd=False)
    goal = _gaussian(_get(doc, "goal", ""), system.n_x, "goal", require_pd=True)

    try:
        problem = SteeringProblem(system, init, goal, lam=lam, gamma=gamma)
    except CovsteerError as exc:
        raise ConfigError(str(exc)) from exc

    return ScenarioConfig(
        cost=cost,
        problem=problem,
        seed=seed,
        solver_settings=_solver_settings(doc.get("solver"), cost),
    )


def apply_overrides(doc, overrides: Sequence[str]):
    """Apply ``key=value`` items (dotted keys, YAML-parsed values) to a copy."""
    out = copy.deepcopy(doc) if doc is not None else {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} must have the form key=value")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: unparseable value ({exc})") from exc
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out


def load_config(path, overrides: Sequence[str] = ()) -> ScenarioConfig:
    """Read, override, and validate a scenario configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return parse_config(apply_overrides(doc, overrides))
