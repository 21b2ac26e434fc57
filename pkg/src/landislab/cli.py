"""Command line: ``landislab run <spec>``, ``list-experiments``, ``report <dir>``.

Exit status is 0 when every check passes, 1 when a check fails and 2 on a
configuration error. The default output root is read from
``$LANDISLAB_OUTPUT`` (``./landislab_output`` when unset).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (
    EXPERIMENTS, ConfigError, bundled_specs, load_spec, output_dir, run_experiment, write_outcome,
)

log = logging.getLogger("landislab")


def _cmd_run(args) -> int:
    try:
        spec = load_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
        if args.h_override is not None:
            if not args.h_override > 0:
                raise ConfigError("--h-override", f"must be positive (got {args.h_override})")
            spec.h = args.h_override
        outcome = run_experiment(spec, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    d = Path(args.out) if args.out else output_dir(spec)
    write_outcome(spec, outcome, d)
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  ({c.detail})")
    if not outcome.passed:
        failing = ", ".join(c.name for c in outcome.checks if not c.passed)
        print(f"{spec.name}: failing checks: {failing}; reports in {d}", file=sys.stderr)
        return 1
    print(f"{spec.name}: all checks passed; artifacts in {d}")
    return 0


def _cmd_list(args) -> int:
    for name, (_, desc) in EXPERIMENTS.items():
        print(f"{name:18s} {desc}")
    specs = bundled_specs()
    if specs:
        print("\nbundled specs:")
        for name in specs:
            print(f"  {name}")
    return 0


def _cmd_report(args) -> int:
    d = Path(args.dir)
    paths = sorted(d.rglob("report.json")) if d.is_dir() else []
    if not paths:
        print(f"no report.json under {d}", file=sys.stderr)
        return 2
    ok = True
    for p in paths:
        rep = json.loads(p.read_text())
        for c in rep["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {rep['name']}: {c['name']}")
        ok = ok and rep["pass"]
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landislab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment spec (path or bundled name)")
    r.add_argument("spec")
    r.add_argument("--threads", type=int, default=1, help="worker processes for sweep entries")
    r.add_argument("--h-override", type=float, default=None, help="replace the grid spacing")
    r.add_argument("--seed", type=int, default=None, help="replace the base seed")
    r.add_argument("--out", default=None, help="output directory (default: $LANDISLAB_OUTPUT/<name>)")
    r.set_defaults(func=_cmd_run)
    ls = sub.add_parser("list-experiments", help="list experiment kinds and bundled specs")
    ls.set_defaults(func=_cmd_list)
    rp = sub.add_parser("report", help="summarize report.json files under a directory")
    rp.add_argument("dir")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
