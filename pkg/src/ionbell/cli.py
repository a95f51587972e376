"""Command-line scenario runner.

    ionbell run SCENARIO.json [--seed N] [--jobs J] [--out-dir DIR]
    ionbell fixtures NAME|all DIR

Exit status: 0 success, 2 configuration error, 3 a fit or optimiser did
not converge (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import scenarios

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
log = logging.getLogger("ionbell")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def run_scenario(path, *, seed=None, jobs=1, out_dir=None) -> int:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = scenarios.resolve(raw, seed)
    except scenarios.ConfigError as exc:
        print(f"config error in {path}:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir) if out_dir else Path(path).resolve().parent / "out"
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s (seed %d, %d jobs)", cfg["scenario"], cfg["seed"], jobs)
    outcome = scenarios.run(cfg, jobs)
    prefix = cfg["output"]["prefix"]
    with open(out / f"{prefix}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(outcome.header)
        w.writerows(_plain(outcome.rows))
    summary = {
        "scenario": cfg["scenario"],
        "seed": cfg["seed"],
        "config_sha256": scenarios.config_hash(cfg),
        "config": cfg,
        "results": outcome.results,
        "converged": outcome.converged,
        "warnings": outcome.warnings,
    }
    (out / f"{prefix}_summary.json").write_text(dump_json(summary))
    (out / f"{prefix}_report.txt").write_text(outcome.report + "\n")
    print(outcome.report)
    for w in outcome.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK if outcome.converged else EXIT_CONVERGENCE


def emit_fixture(name: str, directory) -> list[Path]:
    names = scenarios.NAMES if name == "all" else (name,)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for n in names:
        p = d / f"{n}.json"
        p.write_text(dump_json(scenarios.fixture(n)))
        written.append(p)
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ionbell", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for scan points")
    r.add_argument("--out-dir", help="output directory (default: ./out next to the scenario)")
    f = sub.add_parser("fixtures", help="write canonical scenario files")
    f.add_argument("name", choices=(*scenarios.NAMES, "all"))
    f.add_argument("directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run":
        if args.jobs < 1:
            print("config error: --jobs must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        return run_scenario(args.scenario, seed=args.seed, jobs=args.jobs, out_dir=args.out_dir)
    for p in emit_fixture(args.name, args.directory):
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
