"""Command-line front end: ``diraclab {simulate,verify,oracle,scan,report}``.

Every run writes ``manifest.json`` (subcommand, resolved configuration,
seed, code version) and ``config.ini`` next to its CSV/JSON outputs.  The
exit status is 0 when every enforced check passes, 1 when one fails, 2 for
usage or configuration errors and 3 when a request exceeds a capacity limit.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import subprocess
import sys
from pathlib import Path

import numpy as np
import scipy

from . import suites
from .config import ConfigError, load_config, set_value, to_jsonable, write_config
from .grid import THREADS_ENV, CapacityError, ContractViolation, fft_workers

log = logging.getLogger("diraclab")

SUBCOMMANDS = ("simulate", "verify", "oracle", "scan", "report")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3

# flag -> (setting, setting used by the scan subcommand)
OVERRIDES = {
    "epsilon": ("physics.epsilon", "physics.epsilon"),
    "T": ("time.T", "time.T"),
    "n": ("grid.n", "scan.n"),
    "m": ("physics.m", "scan.m"),
    "dt": ("time.dt", "time.dt"),
    "s": ("physics.s", "physics.s"),
    "seed": ("run.seed", "run.seed"),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", help="output directory (default: runs/<subcommand>)")
    p.add_argument("--epsilon", type=float, help="H^s size of the initial data")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--n", type=int, help="grid points per side (scan grid for 'scan')")
    p.add_argument("--m", type=float, help="mass (scan mass for 'scan')")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--s", type=float, help="Sobolev index")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diraclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    p = sub.add_parser("simulate", help="evolve the Dirac equation and report scattering diagnostics")
    _add_common(p)
    p = sub.add_parser("verify", help="identity suites for the matrices, projections and null decomposition")
    _add_common(p)
    p = sub.add_parser("oracle", help="calibrate the free-wave interaction integrals against brute force")
    _add_common(p)
    p = sub.add_parser("scan", help="Strichartz, bilinear, null-form, modulation and dyadic scans")
    _add_common(p)
    p.add_argument("--parts", default=",".join(suites.SCAN_PARTS),
                   help=f"comma separated subset of {','.join(suites.SCAN_PARTS)}")
    p.add_argument("--trials", type=int, help="trials per data family and scan point")
    p = sub.add_parser("report", help="aggregate run directories into a summary, tables and PNG figures")
    p.add_argument("dirs", nargs="+", help="run directories (each must hold a manifest.json)")
    p.add_argument("--out", default="runs/report", help="report directory")
    return parser


def resolve_config(args) -> dict:
    cfg = load_config(args.config)
    col = 1 if args.command == "scan" else 0
    for flag, targets in OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            set_value(cfg, targets[col], value)
    if getattr(args, "trials", None) is not None:
        set_value(cfg, "scan.trials", args.trials)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        set_value(cfg, key.strip(), value)
    return cfg


def code_version() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).resolve().parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: dict | None, config_path, extra: dict | None = None) -> dict:
    manifest = {
        "subcommand": command,
        "config_path": None if config_path is None else str(config_path),
        "config": None if cfg is None else to_jsonable(cfg),
        "seed": None if cfg is None else cfg["run"]["seed"],
        "output_dir": str(out),
        "code_version": code_version(),
        "source_sha256": source_digest(),
        "threads": fft_workers(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        **(extra or {}),
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    if cfg is not None:
        write_config(cfg, out / "config.ini")
    return manifest


def _print_checks(result: suites.SuiteResult):
    for c in result.checks:
        print(c.line())
    print(f"{result.name}: {'PASS' if result.passed else 'FAIL'}")


def _run_suite(args, cfg) -> suites.SuiteResult:
    if args.command == "verify":
        return suites.verify_suite(cfg)
    if args.command == "oracle":
        return suites.oracle_suite(cfg)
    if args.command == "scan":
        parts = [p.strip() for p in args.parts.split(",") if p.strip()]
        unknown = [p for p in parts if p not in suites.SCAN_PARTS]
        if unknown:
            raise ConfigError(f"unknown scan parts {unknown}; choose from {list(suites.SCAN_PARTS)}")
        return suites.scan_suite(cfg, parts)
    if args.command == "simulate":
        return suites.simulate(cfg, args.out)
    raise AssertionError(args.command)


# ---------------------------------------------------------------------------
# report


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(dirs, out_dir) -> int:
    from .plotting import PLOTTERS

    runs = []
    for d in map(Path, dirs):
        if not (d / "manifest.json").is_file():
            print(f"error: {d} has no manifest.json; refusing to report on it", file=sys.stderr)
            return EXIT_USAGE
        with open(d / "manifest.json") as fh:
            runs.append((d, json.load(fh)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries, all_checks, figures = [], [], []
    for d, manifest in runs:
        label = f"{manifest['subcommand']}-{d.name}"
        checks = _read_csv(d / "checks.csv") if (d / "checks.csv").is_file() else []
        for c in checks:
            all_checks.append({"run": label, **c})
        failed = [c["check"] for c in checks if c["enforced"] == "True" and c["passed"] != "True"]
        tables = sorted(p.stem for p in d.glob("*.csv") if p.stem != "checks")
        for name in tables:
            rows = _read_csv(d / f"{name}.csv")
            suites.write_rows(out / f"{label}_{name}.csv", rows)
            if name in PLOTTERS and rows:
                png = PLOTTERS[name](rows, out / f"{label}_{name}.png")
                figures.append(png.name)
        entries.append({"dir": str(d), "label": label, "subcommand": manifest["subcommand"],
                        "seed": manifest.get("seed"), "code_version": manifest.get("code_version"),
                        "checks": len(checks), "failed": failed, "passed": not failed, "tables": tables})
    suites.write_rows(out / "checks.csv", all_checks)
    summary = {"runs": entries, "figures": figures, "passed": all(e["passed"] for e in entries)}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    write_manifest(out, "report", None, None, {"sources": [str(d) for d, _ in runs]})
    for e in entries:
        print(f"{'PASS' if e['passed'] else 'FAIL'}  {e['label']}: {e['checks']} checks"
              + (f", failed: {'; '.join(e['failed'])}" if e["failed"] else ""))
    print(f"report written to {out} ({len(figures)} figures)")
    return EXIT_OK if summary["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "report":
        return report(args.dirs, args.out)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.out = args.out or f"runs/{args.command}"
    out = Path(args.out)
    write_manifest(out, args.command, cfg, args.config, {"argv": list(sys.argv[1:] if argv is None else argv)})
    log.info("running %s into %s (%s=%s)", args.command, out, THREADS_ENV, fft_workers())
    try:
        result = _run_suite(args, cfg)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result.write(out)
    _print_checks(result)
    log.info("%s finished in %.1f s", args.command, result.elapsed)
    return EXIT_OK if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
