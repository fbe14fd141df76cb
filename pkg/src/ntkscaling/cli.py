"""Command line: ``ntkscaling run|validate <config>`` and ``ntkscaling list-kinds``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.  The default
output root is taken from ``$NTKSCALING_OUTPUT_ROOT``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import KIND_HELP, KINDS, ConfigError, load_config, output_dir, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(path):
    try:
        return load_config(path)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_INVALID
    report = validate(cfg)
    for line in report.lines():
        print(line)
    if report.ok:
        print(f"{args.config}: ok")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_run(args) -> int:
    from .experiments import StageError, run

    cfg = _load(args.config)
    if cfg is None:
        return EXIT_INVALID
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    report = validate(cfg)
    if not report.ok:
        for line in report.lines():
            print(line, file=sys.stderr)
        return EXIT_INVALID
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        summary = run(cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything outside a named stage
        print(f"error: stage 'run' failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for r in summary["results"]:
        parts = []
        for k, v in r["fitted"].items():
            p = r["predicted"].get(k)
            parts.append(f"{k}={v:.4g}" + (f" (pred {p:.4g})" if p is not None else ""))
        print(f"{r['label']}: " + ", ".join(parts))
    print(f"artifacts written to {output_dir(cfg)}")
    return EXIT_OK


def cmd_list_kinds(args) -> int:
    for k in KINDS:
        print(f"{k:16s} {KIND_HELP[k]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ntkscaling", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output-dir", help="override the config's output directory")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    sub.add_parser("list-kinds", help="list experiment kinds").set_defaults(func=cmd_list_kinds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
