"""Structured solver vs generic quasi-Newton on growing horizons.

The structured route exploits the problem's difference-of-convex shape;
the generic route minimizes the same objective over raw feedback gains
with finite-difference gradients. The gap widens quickly with the
horizon, which is the point of having the structured solver at all.

Horizons are kept small here so the demo finishes in seconds; pass
--full for the slower sweep.
"""

import sys

import numpy as np

from covsteer import Gaussian, SteeringProblem, run_bench, write_csv


def family(n, gamma):
    return SteeringProblem.time_invariant(
        A=np.array([[1.0, 1.0], [0.0, 1.0]]),
        B=np.array([[0.0], [1.0]]),
        G=np.eye(2),
        horizon=n,
        init=Gaussian([0.0, 1.0], 10.0 * np.eye(2)),
        goal=Gaussian([10.0, 12.0], np.eye(2)),
        lam=10.0,
        gamma=gamma,
    )


def main():
    full = "--full" in sys.argv[1:]
    n_list = [20, 30, 40, 50] if full else [8, 12, 16]
    records = run_bench(family, n_list, gamma_list=[1.0], repetitions=1)

    print(f"{'N':>4} {'solver':>7} {'seconds':>10} {'iterations':>11} {'objective':>14}")
    for r in records:
        print(
            f"{r.N:>4} {r.solver:>7} {r.wall_seconds:>10.3f} "
            f"{r.iterations:>11d} {r.final_objective:>14.6f}"
        )
    write_csv(records, "solver_race.csv")
    print("\nwrote solver_race.csv")


if __name__ == "__main__":
    main()
