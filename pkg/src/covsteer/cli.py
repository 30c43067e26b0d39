"""Command-line entry point: ``covsteer solve | simulate | bench``.

solve writes report.json, policy.json, ellipses.csv, trace.csv into --out;
simulate rolls a stored policy out on the configured system and writes
paths.csv and empirical.csv; bench sweeps horizon/noise grids and writes
the timing CSV. Exit codes: 0 success (including solver convergence by any
tolerance), 2 solver stopped at its iteration cap, 1 any error. All CSV
numbers carry 17 significant digits.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bench import SOLVER_CCP, SOLVER_NLP, run_bench, write_csv
from .ccp import DcObjective, TERMINATION_MAX_ITERS, ccp_minimize
from .config import COST_WASSERSTEIN, ScenarioConfig, load_config
from .errors import ConfigError, CovsteerError, DimMismatchError
from .gaussians import Gaussian, confidence_ellipse
from .klnlp import KlObjective, qn_minimize
from .simulate import empirical_moments, rollout
from .steering import (
    HistoryPolicy,
    LtvSystem,
    MemorylessPolicy,
    SteeringProblem,
    assemble,
    stage_moments,
)


def _g17(x) -> str:
    return format(float(x), ".17g")


def save_policy(policy, path) -> None:
    """Serialize a policy to JSON (floats round-trip exactly)."""
    if isinstance(policy, MemorylessPolicy):
        n, n_u, n_x = policy.gains.shape
        doc = {
            "type": "memoryless",
            "horizon": n,
            "n_u": n_u,
            "n_x": n_x,
            "gains": policy.gains.tolist(),
            "u_ff": policy.u_ff.tolist(),
        }
    elif isinstance(policy, HistoryPolicy):
        doc = {
            "type": "history",
            "feedback": policy.feedback,
            "gains": policy.gains.tolist(),
            "u_ff": policy.u_ff.tolist(),
        }
    else:
        raise CovsteerError(f"unsupported policy type {type(policy).__name__}")
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_policy(path):
    """Inverse of save_policy."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read policy file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    kind = doc.get("type")
    if kind == "memoryless":
        return MemorylessPolicy(np.asarray(doc["gains"]), np.asarray(doc["u_ff"]))
    if kind == "history":
        return HistoryPolicy(
            np.asarray(doc["gains"]), np.asarray(doc["u_ff"]), feedback=doc["feedback"]
        )
    raise ConfigError(f"{path}: unknown policy type {kind!r}")


def _write_report(path, cfg: ScenarioConfig, report) -> None:
    doc = {
        "cost": cfg.cost,
        "termination": report.termination,
        "iterations": report.iterations,
        "wall_seconds": report.wall_time,
        "objective": float(report.objective_trace[-1]),
        "objective_trace": [float(v) for v in report.objective_trace],
        "trace_wall_seconds": [float(t) for t in report.trace_times],
        "terminal": {
            "mean": report.terminal.mean.tolist(),
            "cov": report.terminal.cov.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _write_trace(path, report) -> None:
    trace = report.objective_trace
    times = report.trace_times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iter", "objective", "delta", "wall_ms"))
        for i, value in enumerate(trace):
            delta = 0.0 if i == 0 else float(trace[i - 1] - value)
            writer.writerow((i, _g17(value), _g17(delta), _g17(times[i] * 1000.0)))


def _write_ellipses(path, policy, ops, n_sigma=2.0, n_points=64) -> None:
    """Per-stage confidence-ellipse polylines (leading 2 state coordinates)."""
    means, covs = stage_moments(policy, ops)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("stage", "point_index", "x", "y"))
        if ops.n_x < 2:
            return
        for k in range(means.shape[0]):
            plane = Gaussian(means[k][:2], covs[k][:2, :2], require_pd=False)
            points = confidence_ellipse(plane, n_sigma, n_points)
            for j, (x, y) in enumerate(points):
                writer.writerow((k, j, _g17(x), _g17(y)))


def cmd_solve(config_path, out_dir, overrides=()) -> int:
    try:
        cfg = load_config(config_path, overrides)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ops = assemble(cfg.problem)
        if cfg.cost == COST_WASSERSTEIN:
            report = ccp_minimize(DcObjective(cfg.problem, ops), cfg.solver_settings)
        else:
            report = qn_minimize(KlObjective(cfg.problem, ops), cfg.solver_settings)
        _write_report(out / "report.json", cfg, report)
        save_policy(report.policy, out / "policy.json")
        _write_trace(out / "trace.csv", report)
        _write_ellipses(out / "ellipses.csv", report.policy, ops)
    except (CovsteerError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"termination: {report.termination} after {report.iterations} iterations")
    print(f"objective: {_g17(report.objective_trace[-1])}")
    print(f"terminal mean: {[_g17(v) for v in report.terminal.mean]}")
    print(f"wrote report.json, policy.json, ellipses.csv, trace.csv to {out}")
    return 2 if report.termination == TERMINATION_MAX_ITERS else 0


def cmd_simulate(config_path, policy_path, n_paths, seed, out_dir, overrides=()) -> int:
    try:
        cfg = load_config(config_path, overrides)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if policy_path is None:
            policy_path = out / "policy.json"
        policy = load_policy(policy_path)
        ops = assemble(cfg.problem)
        use_seed = cfg.seed if seed is None else int(seed)
        try:
            batch = rollout(policy, cfg.problem, use_seed, n_paths, ops)
        except (DimMismatchError, CovsteerError) as exc:
            raise ConfigError(
                f"policy file {policy_path} does not fit the configured system: {exc}"
            ) from exc

        n_x = ops.n_x
        with open(out / "paths.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("path_id", "stage") + tuple(f"x{i + 1}" for i in range(n_x)))
            for p in range(batch.n_paths):
                for k in range(ops.horizon + 1):
                    writer.writerow(
                        (p, k) + tuple(_g17(v) for v in batch.trajectories[p, k])
                    )
        with open(out / "empirical.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            header = (
                ("stage",)
                + tuple(f"mean_{i + 1}" for i in range(n_x))
                + tuple(f"cov_{i + 1}_{j + 1}" for i in range(n_x) for j in range(n_x))
            )
            writer.writerow(header)
            for k in range(ops.horizon + 1):
                moments = empirical_moments(batch, k)
                writer.writerow(
                    (k,)
                    + tuple(_g17(v) for v in moments.mean)
                    + tuple(_g17(v) for v in moments.cov.ravel())
                )
    except (CovsteerError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote paths.csv and empirical.csv for {n_paths} paths to {out}")
    return 0


def cmd_bench(config_path, n_list, gamma_list, out_path, overrides=()) -> int:
    try:
        cfg = load_config(config_path, overrides)
        base = cfg.problem

        def family(n: int, gamma: float) -> SteeringProblem:
            # sweeps re-use the first-stage matrices time-invariantly
            system = LtvSystem.time_invariant(
                base.system.A[0], base.system.B[0], base.system.G[0], n
            )
            return SteeringProblem(system, base.init, base.goal, base.lam, gamma)

        solvers = (SOLVER_CCP, SOLVER_NLP) if cfg.cost == COST_WASSERSTEIN else (SOLVER_NLP,)
        records = run_bench(family, n_list, gamma_list, solvers=solvers, cost=cfg.cost)
        write_csv(records, out_path, error_column=True)
    except (CovsteerError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    failed = sum(1 for r in records if r.error)
    note = f" ({failed} failed, see error column)" if failed else ""
    print(f"wrote {len(records)} bench records to {out_path}{note}")
    return 0


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covsteer",
        description="Steer a stochastic linear system toward a goal Gaussian.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="synthesize a policy for a scenario")
    solve.add_argument("--config", required=True, help="scenario YAML file")
    solve.add_argument("--out", required=True, help="output directory")
    solve.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override a config entry (dotted keys, repeatable)",
    )

    simulate = sub.add_parser("simulate", help="Monte Carlo rollout of a stored policy")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--out", required=True)
    simulate.add_argument(
        "--policy", default=None, help="policy JSON (default: <out>/policy.json)"
    )
    simulate.add_argument("--paths", type=int, default=15, help="number of sample paths")
    simulate.add_argument("--seed", type=int, default=None, help="override the config seed")
    simulate.add_argument(
        "--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE"
    )

    bench = sub.add_parser("bench", help="time solvers over horizon/noise grids")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", default="bench.csv", help="output CSV path")
    bench.add_argument(
        "--n-list", type=_int_list, default=[10, 20, 30, 40, 50], help="horizons, comma-separated"
    )
    bench.add_argument(
        "--gamma-list", type=_float_list, default=[1.0, 0.5], help="noise levels, comma-separated"
    )
    bench.add_argument(
        "--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.out, args.overrides)
    if args.command == "simulate":
        return cmd_simulate(
            args.config, args.policy, args.paths, args.seed, args.out, args.overrides
        )
    return cmd_bench(args.config, args.n_list, args.gamma_list, args.out, args.overrides)


if __name__ == "__main__":
    sys.exit(main())
