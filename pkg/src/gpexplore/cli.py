"""Command-line interface for running and replaying benchmark experiments."""

from __future__ import annotations

import argparse
import sys

from .harness import (
    emit_results,
    expand_config,
    load_config_file,
    replay,
    run_benchmark,
    summary_rows,
)


def _print_summary(report) -> None:
    rows = [r for r in summary_rows(report) if r["coverage_mean"] is not None or r["n_trials"] == 0]
    print(f"{'system':<10} {'strategy':<8} {'final RMSE':>16} {'coverage %':>16} {'trials':>7}")
    for r in rows:
        if r["n_trials"] == 0:
            print(f"{r['system']:<10} {r['strategy']:<8} {'(all trials failed)':>16}")
            continue
        rmse_txt = f"{r['rmse_mean']:.3f} ± {r['rmse_std']:.3f}"
        cov_txt = f"{r['coverage_mean']:.1f} ± {r['coverage_std']:.1f}"
        print(f"{r['system']:<10} {r['strategy']:<8} {rmse_txt:>16} {cov_txt:>16} {r['n_trials']:>7}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gpexplore",
        description="Benchmark excitation strategies for learning dynamics with GPs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark and write CSV results")
    run_p.add_argument("--config", help="YAML experiment config (defaults used if omitted)")
    run_p.add_argument("--system", help="restrict to one system")
    run_p.add_argument("--strategy", help="restrict to one strategy")
    run_p.add_argument("--trials", type=int, help="trials per (system, strategy) cell")
    run_p.add_argument("--seed", type=int, help="base seed (per-trial seed = base XOR index)")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--workers", type=int, help="parallel trial workers")

    replay_p = sub.add_parser("replay", help="re-run the experiments from a manifest")
    replay_p.add_argument("--manifest", required=True)
    replay_p.add_argument("--out", default="results-replay")
    replay_p.add_argument("--workers", type=int, default=1)

    sub.add_parser("list-systems", help="print the available simulated plants")
    sub.add_parser("list-strategies", help="print the available strategies")

    args = parser.parse_args(argv)

    if args.command == "list-systems":
        from .systems import available_systems

        print("\n".join(available_systems()))
        return 0
    if args.command == "list-strategies":
        from .strategies import available_strategies

        print("\n".join(available_strategies()))
        return 0
    if args.command == "replay":
        paths = replay(args.manifest, args.out, workers=args.workers)
        print(f"replayed to {paths['summary']}")
        return 0

    data = load_config_file(args.config)
    workers = args.workers if args.workers is not None else int(data.get("workers", 1))
    overrides = {
        "system": args.system,
        "strategy": args.strategy,
        "trials": args.trials,
        "base_seed": args.seed,
    }
    configs = expand_config(data, overrides)
    report = run_benchmark(configs, workers=workers)
    paths = emit_results(report, args.out)
    _print_summary(report)
    print(f"\nresults written to {paths['summary'].parent}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
