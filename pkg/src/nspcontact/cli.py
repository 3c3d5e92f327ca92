"""Command-line front end.

One subcommand per experiment kind.  Exit codes: 0 all checks pass,
1 at least one check failed, 2 configuration problem, 3 solver failure.
"""

import argparse
import sys

from .config import (
    EXPERIMENT_KINDS,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .harness import run_experiment

_GREEN = "\x1b[32m"
_RED = "\x1b[31m"
_RESET = "\x1b[0m"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nspcontact",
        description="Contact-wave profile construction, time integration, "
                    "and stability diagnostics for a viscous heat-conducting "
                    "plasma half-space model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", default=None,
                       help="configuration file (defaults apply if omitted)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides experiment.out_dir)")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes for sweep experiments")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override one config entry (repeatable)")
        p.add_argument("--no-color", action="store_true",
                       help="disable ANSI colors in the summary table")
    return parser


def _load(args):
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig.defaults()
    overrides = list(args.override)
    overrides.append(f"experiment.kind={args.command}")
    if args.out is not None:
        overrides.append(f"experiment.out_dir={args.out}")
    return cfg.with_overrides(overrides)


def _paint(text, color, enabled):
    if not enabled:
        return text
    return f"{color}{text}{_RESET}"


def print_summary(summary, color=True, stream=None):
    stream = stream or sys.stdout
    print(f"experiment: {summary['experiment']}", file=stream)
    print(f"status:     {summary['status']}", file=stream)
    if "error" in summary:
        print(f"error:      {summary['error']}", file=stream)
    checks = summary.get("checks", [])
    if checks:
        width = max(len(c["check"]) for c in checks)
        for c in checks:
            verdict = c["verdict"]
            tag = _paint(verdict.upper(),
                         _GREEN if verdict == "pass" else _RED, color)
            print(
                f"  {c['check']:<{width}}  measured={c['measured']:+.6g}  "
                f"target={c['target']:+.6g}  tol={c['tol']:.3g}  {tag}",
                file=stream,
            )
    print(f"outputs in: {summary['out_dir']}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    summary = run_experiment(cfg)
    print_summary(summary, color=not args.no_color and sys.stdout.isatty())
    return int(summary.get("exit_code", 3))


if __name__ == "__main__":
    sys.exit(main())
