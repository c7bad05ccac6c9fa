"""Command-line harness.

Subcommands:
  run            execute a learning experiment and persist its artifacts
  report         summarize an existing (possibly partial) run directory
  verify-lemmas  run the seeded Monte-Carlo convergence checks
  sim            plant-only execution of an input CSV

Exit codes: 0 success, 1 plant fault / failed check, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, signals, verify
from .harness import ConfigError, RunConfig, TrajectorySpec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpilc",
        description="Frequency-domain iterative learning control with GP models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a learning experiment")
    run_p.add_argument("--config", help="INI config file")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--seed", type=int, help="master random seed")
    run_p.add_argument("--iterations", type=int, help="learning iterations after iteration 0")
    run_p.add_argument(
        "--trajectory",
        help="slow | fast | custom:<csv path>",
    )
    run_p.add_argument("--plant", help="sea-arm | lti:<json path>")
    run_p.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration and exit",
    )

    rep_p = sub.add_parser("report", help="summarize a run directory")
    rep_p.add_argument("run_dir")

    ver_p = sub.add_parser("verify-lemmas", help="run convergence Monte-Carlo checks")
    ver_p.add_argument("--seed", type=int, default=0)
    ver_p.add_argument("--trials", type=int, default=1000)

    sim_p = sub.add_parser("sim", help="execute a plant on an input CSV")
    sim_p.add_argument("--plant", default="sea-arm", help="sea-arm | lti:<json path>")
    sim_p.add_argument("--input", required=True, help="input trajectory CSV")
    sim_p.add_argument("--out", required=True, help="output trajectory CSV")
    sim_p.add_argument("--config", help="INI config file (arm parameters)")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    import dataclasses

    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.iterations is not None:
        config.learning = dataclasses.replace(config.learning, max_iterations=args.iterations)
    if args.trajectory is not None:
        if args.trajectory == "slow":
            config.trajectory = TrajectorySpec.slow()
            if args.config is None:
                config.learning = harness.slow_learning_config(
                    max_iterations=config.learning.max_iterations
                )
                config.seed_passes = 1
        elif args.trajectory == "fast":
            config.trajectory = TrajectorySpec.fast()
            if args.config is None:
                config.learning = harness.fast_learning_config(
                    max_iterations=config.learning.max_iterations
                )
                config.seed_passes = 2
        elif args.trajectory.startswith("custom:"):
            config.trajectory = TrajectorySpec(
                "custom", (), 1.0, args.trajectory[len("custom:"):]
            )
        else:
            raise ConfigError(f"unknown trajectory {args.trajectory!r}")
    if args.plant is not None:
        config.plant = args.plant
    return config


def _cmd_run(args) -> int:
    config = harness.load_config(args.config) if args.config else RunConfig()
    config = _apply_overrides(config, args)
    if args.print_config:
        sys.stdout.write(harness.config_text(config))
        return 0
    outcome = harness.run_experiment(config)
    print(f"run artifacts in {outcome.directory}")
    print(harness.report(outcome.directory), end="")
    return 0 if outcome.ok else 1


def _cmd_report(args) -> int:
    print(harness.report(args.run_dir), end="")
    return 0


def _cmd_verify(args) -> int:
    results = verify.run_all_checks(trials=args.trials, seed=args.seed)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_sim(args) -> int:
    config = harness.load_config(args.config) if args.config else RunConfig()
    config.plant = args.plant
    plant = harness._build_plant(config)
    u = signals.read_timeseries_csv(args.input)
    run = plant.execute(u)
    signals.write_timeseries_csv(run.outputs, args.out)
    if run.fault:
        print(f"plant fault: {run.fault}", file=sys.stderr)
        return 1
    print(f"simulated {u.duration:.3f} s -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "report": _cmd_report,
        "verify-lemmas": _cmd_verify,
        "sim": _cmd_sim,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
