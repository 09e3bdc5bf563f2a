"""Command-line interface.

Subcommands::

    juice run      -- run a Monte-Carlo experiment from a config or preset
    juice trial    -- run one seeded trial and dump its diagnostics as JSON
    juice validate -- run the invariant/property suite on random instances

``--config`` points to a JSON file whose keys mirror
:class:`juice_admm.harness.ExperimentConfig`; explicit flags override file
values. Exit status is nonzero on any failed validation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import harness
from .validation import run_validation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="juice",
        description="Joint user identification and channel estimation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=sorted(harness.PRESETS),
                       help="named base configuration (default: desk)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--threads", type=int, help="worker processes for trials")
        p.add_argument("--activity", choices=["clustered", "random"])
        p.add_argument("--snr-db", type=float, dest="snr_db")

    run_p = sub.add_parser("run", help="run an experiment sweep")
    common(run_p)
    run_p.add_argument("--trials", type=int, help="trials per sweep point")

    trial_p = sub.add_parser("trial", help="run one trial with diagnostics")
    common(trial_p)
    trial_p.add_argument("--tau-p", type=int, dest="tau_p",
                         help="pilot length (default: first sweep value)")
    trial_p.add_argument("--trial-index", type=int, default=0)

    val_p = sub.add_parser("validate", help="run invariant checks")
    val_p.add_argument("--seed", type=int, default=0)
    return parser


def _resolve_config(args) -> harness.ExperimentConfig:
    if args.config:
        config = harness.load_config(args.config)
    else:
        config = harness.preset(args.preset or "desk")
    if args.preset and args.config:
        raise SystemExit("use either --config or --preset, not both")
    overrides = {}
    for key in ("seed", "out", "threads", "activity", "snr_db"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _cmd_run(args) -> int:
    config = _resolve_config(args)
    result = harness.run_experiment(config)
    print(f"{'algorithm':<12} {'tau_p':>6} {'trials':>7} {'nmse_db':>9} {'srr':>7} {'iters':>7}")
    for row in result.rows:
        print(f"{row.algorithm:<12} {row.tau_p:>6} {row.trials:>7} "
              f"{row.nmse_db:>9.2f} {row.srr:>7.3f} {row.mean_iters:>7.1f}")
    if result.failures:
        print(f"{len(result.failures)} failed trials", file=sys.stderr)
    if config.out:
        print(f"wrote {config.out} and {config.out}.json")
    measured = [r.wall_time for r in result.trial_results]
    print(f"total solver wall time {sum(measured):.1f}s over {len(measured)} runs")
    return 0


def _cmd_trial(args) -> int:
    config = _resolve_config(args)
    tau_p = args.tau_p if args.tau_p is not None else config.tau_p_sweep[0]
    seed = harness.trial_seed_for(config.seed, tau_p, args.trial_index)
    results = harness.run_trial(config, tau_p, seed)
    payload = {
        "tau_p": tau_p,
        "trial_seed": seed,
        "results": [dataclasses.asdict(r) for r in results],
    }
    out = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out + "\n")
    else:
        print(out)
    return 1 if any(r.failed for r in results) else 0


def _cmd_validate(args) -> int:
    return 0 if run_validation(args.seed) else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        code = _cmd_run(args)
    elif args.command == "trial":
        code = _cmd_trial(args)
    else:
        code = _cmd_validate(args)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
