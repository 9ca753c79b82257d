"""``asianop <command> --config run.toml [--output DIR] [--no-cache] [--probe t,s,a]...``

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure
(or any unexpected error), 3 a validation check failed or a comparison
disagreed. The result JSON goes to stdout and to the output directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import parse_config
from .errors import AsianopError, ConfigError, ValidationFailure
from .runner import COMMANDS, dispatch, dumps

log = logging.getLogger("asianop")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _probe(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    try:
        if len(parts) != 3:
            raise ValueError
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--probe expects t,s,a; got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="asianop", description="American Asian option pricing and validation.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="TOML run configuration (defaults if omitted)")
    ap.add_argument("--output", type=Path, help="output directory (overrides [output] directory)")
    ap.add_argument("--no-cache", action="store_true", help="ignore and do not update the cache")
    ap.add_argument("--probe", action="append", type=str, default=[],
                    help="probe point t,s,a; repeatable; replaces the configured probes")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for Monte Carlo blocks (results do not depend on it)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="asianop: %(levelname)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    cfg = parse_config(args.config)
    if args.probe:
        cfg = cfg.with_probes([_probe(p) for p in args.probe])
    doc = dispatch(args.command, cfg, args.output, use_cache=not args.no_cache,
                   threads=args.threads)
    print(dumps(doc))
    if doc["status"] in ("failed", "disagree"):
        raise ValidationFailure(f"{args.command} finished with status {doc['status']}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except AsianopError as exc:
        print(f"asianop: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("asianop: interrupted", file=sys.stderr)
        return 2
    except Exception as exc:   # anything unforeseen is reported as a numerical failure
        print(f"asianop: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
