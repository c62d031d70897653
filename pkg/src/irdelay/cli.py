"""Command-line entry point.

Subcommands: rates, simulate, estimate, reproduce, throughput. All take a
JSON config (see harness.DEFAULT_CONFIG for the schema); individual
fields can be overridden with dotted flags, e.g.

    irdelay rates -c config.json --protocol.beta 0.3 --run.n_trials 50000

Exit codes: 0 success, 1 validation error, 2 failed theory-vs-empirics
comparison.
"""

import argparse
import json
import sys

from . import harness, protocols
from .channel import ChannelError
from .harness import ConfigError, ExperimentConfig
from .protocols import ProtocolError


def _apply_overrides(doc, overrides):
    for path, value in overrides:
        node = doc
        keys = path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        try:
            node[keys[-1]] = json.loads(value)
        except json.JSONDecodeError:
            node[keys[-1]] = value
    return doc


def _parse_overrides(extra):
    """Turn ['--protocol.beta', '0.3', ...] into [('protocol.beta', '0.3')]."""
    overrides = []
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--") or "." not in arg:
            raise ConfigError(f"unrecognized argument {arg!r}")
        if "=" in arg:
            path, value = arg[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {arg!r} is missing a value")
            path, value = arg[2:], extra[i + 1]
            i += 2
        overrides.append((path, value))
    return overrides


def _load_config(args, extra):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    _apply_overrides(doc, _parse_overrides(extra))
    return ExperimentConfig.from_dict(doc)


def build_parser():
    parser = argparse.ArgumentParser(prog="irdelay")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="JSON experiment config")
        p.add_argument("-o", "--out", help="output directory override")
        return p

    add("rates", "analytical rate report")
    add("simulate", "run the Monte Carlo batch")
    p = add("estimate", "fit tails of an existing trial table")
    p.add_argument("--trials", help="trial-table CSV (default: the run dir's)")
    p = add("throughput", "measured throughput decay over a bound grid")
    p = sub.add_parser("reproduce", help="re-run a benchmark scenario")
    p.add_argument("example", type=int, choices=(1, 2, 3))
    p.add_argument("-o", "--out", default="reproduce-out")
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=7)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "reproduce":
            summary = harness.cmd_reproduce(args.example, args.out,
                                            n_trials=args.trials,
                                            master_seed=args.seed)
            print(json.dumps(summary, indent=2))
            return 0
        config = _load_config(args, extra)
    except (ConfigError, ChannelError, ProtocolError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "rates":
        report = harness.cmd_rates(config, out_dir=args.out)
        print(harness.format_rates(report))
        return 0
    if args.command == "simulate":
        _, manifest = harness.cmd_simulate(config, out_dir=args.out)
        print(json.dumps(manifest, indent=2))
        return 0
    if args.command == "estimate":
        if args.trials:
            records = protocols.records_from_csv(args.trials)
        else:
            import os
            records = protocols.records_from_csv(
                os.path.join(config.run_dir(), "trials.csv"))
        result = harness.cmd_estimate(config, records, out_dir=args.out)
        print(json.dumps(result, indent=2))
        return 2 if result["status"] == "FAIL" else 0
    if args.command == "throughput":
        doc = harness.cmd_throughput(config, out_dir=args.out)
        print(json.dumps(doc, indent=2))
        return 2 if doc["status"] == "FAIL" else 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
