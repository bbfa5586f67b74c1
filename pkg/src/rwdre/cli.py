"""Command-line runner: ``rwdre --config exp.yaml [--seed N] [--replicas N] [--threads N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigError
from .suites import run

log = logging.getLogger("rwdre")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _plain(v):
    """JSON/CSV friendly scalars."""
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows: list[dict]):
    cols: list = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in cols])


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def parse_args(argv=None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="rwdre", description="Run a random-walk-in-dynamic-environment experiment.")
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--replicas", type=int, help="replica count (overrides the config)")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--format", choices=("csv", "json", "both"), help="artifacts to write")
    p.add_argument("-v", "--verbose", action="store_true")
    return p.parse_args(argv)


def execute(args: argparse.Namespace) -> int:
    try:
        cfg = cfgmod.load(args.config)
        raw = dict(cfg.raw)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.replicas is not None:
            raw["replicas"] = args.replicas
        if args.threads is not None:
            raw["threads"] = args.threads
        cfg = cfgmod.validate(raw)
        out_dir = Path(args.out or cfg.output["dir"])
        fmt = args.format or cfg.output["format"]
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            probe = out_dir / ".write_test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        tables, assertions, summary = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.exception("run failed")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start

    stem = cfg.raw.get("name", cfg.kind)
    if fmt in ("csv", "both"):
        for name, rows in tables.items():
            write_csv(out_dir / f"{stem}_{name}.csv", rows)
    doc = {
        "kind": cfg.kind,
        "assertions": [_plain(a.to_dict()) for a in assertions],
        "summary": _plain(summary),
        "metadata": {"seed": cfg.seed, "replicas": cfg.replicas, "threads": cfg.threads,
                     "git_describe": git_describe(), "wall_time_s": wall},
    }
    if fmt in ("json", "both"):
        (out_dir / f"{stem}_summary.json").write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    for a in assertions:
        status = "PASS" if a.passed else ("REF " if a.flag == "reference only" else "FAIL")
        print(f"{status} {a.name}: lhs={a.lhs:.6g} rhs={a.rhs:.6g} tol={a.tolerance:.3g}")
    return EXIT_FAIL if any(a.blocking for a in assertions) else EXIT_PASS


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
