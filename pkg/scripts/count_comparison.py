"""Compare mean event counts between the two simulators.

Runs the count-comparison scenarios under both the parents-offspring and
the thinning engine and prints the replication-mean counts side by side,
plus the closed-form subcritical expectation mu*|W|/(1-k) for reference.
"""
import argparse
import dataclasses

from sthawkes import run_scenario, scenario_by_id


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", nargs="+", default=["counts-i", "counts-ii"])
    ap.add_argument("--reps", type=int, default=None, help="override replication count")
    ap.add_argument("--seed", type=int, default=None, help="override seed base")
    args = ap.parse_args()

    print(f"{'scenario':<12}{'expected':>10}{'parents':>10}{'thinning':>10}")
    for sid in args.scenarios:
        base = scenario_by_id(sid)
        if args.reps:
            base = dataclasses.replace(base, reps=args.reps)
        if args.seed is not None:
            base = dataclasses.replace(base, seed_base=args.seed)
        truth = base.truth
        expected = truth.mu * base.window.volume / (1.0 - truth.k)
        means = {}
        for method in ("parents-offspring", "thinning"):
            table = run_scenario(dataclasses.replace(base, sim_method=method, fit_methods=()))
            means[method] = table.mean_count
        print(
            f"{sid:<12}{expected:>10.1f}{means['parents-offspring']:>10.1f}{means['thinning']:>10.1f}"
        )


if __name__ == "__main__":
    main()
