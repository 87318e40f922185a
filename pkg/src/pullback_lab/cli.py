"""Command line entry point: ``pullback-lab run | list-scenarios | emit-default-config``.

Exit status: 0 when every gate passes, 1 on a failed gate, 2 on a
configuration error, 3 on a runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_config
from .errors import ConfigError, PullbackLabError
from .runner import OUTPUT_ENV, run_config
from .scenarios import SCENARIOS, default_config_text, list_scenarios

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pullback-lab", description="Pullback attractor robustness experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--output", help=f"output root (overrides ${OUTPUT_ENV} and the config)")
    sub.add_parser("list-scenarios", help="list built-in scenarios")
    emit = sub.add_parser("emit-default-config", help="print the expanded config of a scenario")
    emit.add_argument("scenario")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name, desc in list_scenarios():
            print(f"{name:28s} {desc}")
        return EXIT_OK
    if args.command == "emit-default-config":
        if args.scenario not in SCENARIOS:
            print(f"error: unknown scenario {args.scenario!r}", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(default_config_text(args.scenario))
        return EXIT_OK

    try:
        cfg = parse_config(args.config.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_config(cfg, args.output)
    except (PullbackLabError, ArithmeticError, ValueError, OSError) as exc:
        print(f"runtime error in {cfg.experiment['name']}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_GATE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
