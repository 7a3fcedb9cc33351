"""Command-line interface.

Subcommands: ``run`` (one deterministic scenario, KPIs to stdout/CSV),
``sweep`` (full parameter grid with journaled resume), ``verify`` (the
embedded analytic self-checks), ``paths`` (routing-algebra query on a
topology file) and ``report`` (render figures from sweep/trust outputs).

Exit codes: 0 success, 2 configuration error, 3 run failure,
4 verification failure.  Flags override config-file values; the
``PERMAQNET_OUT_DIR`` environment variable overrides the default output
directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import __version__, metrics, ralgebra
from .figures import render_report, render_trust_dynamics
from .metrics import SweepGrid, compute_kpis, p_b0_points, run_sweep
from .scenario import ConfigError, apply_overrides, config_from_dict
from .simulation import run_scenario
from .trustnet import OperationMode
from .verify import run_all_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_VERIFY = 4


def _out_dir(value: str | None) -> Path:
    if value is not None:
        return Path(value)
    return Path(os.environ.get("PERMAQNET_OUT_DIR", "out"))


def _load_doc(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return doc


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics.atomic_write_text(path, text)


def cmd_run(args) -> int:
    doc = _load_doc(args.config)
    doc = apply_overrides(doc, args.set or [])
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.trust_csv is not None:
        doc.setdefault("trust", {})["series"] = True
    cfg = config_from_dict(doc)
    log = run_scenario(cfg)
    kpis = compute_kpis(log)
    line = (f"mode={cfg.mode} spots={cfg.spots} redundancy={cfg.redundancy} "
            f"p_b0={cfg.p_b0!r} seed={cfg.seed} "
            f"fsr={metrics._fmt(kpis.fsr)} pdr={metrics._fmt(kpis.pdr)} "
            f"str={metrics._fmt(kpis.str_rate)} bnt={metrics._fmt(kpis.bnt)}")
    print(line)
    if args.out is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(metrics.MESH_COLUMNS)
        writer.writerow([cfg.spots, cfg.redundancy, metrics._fmt(cfg.p_b0), cfg.mode,
                         cfg.seed, metrics._fmt(kpis.fsr), metrics._fmt(kpis.pdr),
                         metrics._fmt(kpis.str_rate), metrics._fmt(kpis.bnt)])
        _atomic_write(_out_dir(args.out) / "run.csv", buf.getvalue())
    if args.trust_csv is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["day", "spot", "sensor", "trust"])
        for day, spot, sensor, trust in log.trust_series:
            writer.writerow([repr(day), spot, sensor, repr(trust)])
        _atomic_write(Path(args.trust_csv), buf.getvalue())
    return EXIT_OK


def _grid_from_args(args) -> SweepGrid:
    spots = tuple(int(s) for s in args.spots.split(",")) if args.spots else (32, 64)
    if args.redundancy:
        redundancy = tuple(int(r) for r in args.redundancy.split(","))
    else:
        redundancy = (1, 2, 3, 4, 5)
    points = p_b0_points(args.pb0_min, args.pb0_max, args.pb0_points,
                         "linear" if args.linear_pb0 else "log")
    if args.modes:
        modes = tuple(args.modes.split(","))
        for mode in modes:
            if mode not in metrics.ALL_MODES:
                raise ConfigError(f"unknown mode {mode!r}; choose from {metrics.ALL_MODES}")
    else:
        modes = tuple(metrics.ALL_MODES)
    seeds = tuple(range(args.seeds))
    return SweepGrid(spots=spots, redundancy=redundancy, p_b0=tuple(points),
                     modes=modes, seeds=seeds)


def cmd_sweep(args) -> int:
    doc = _load_doc(args.config)
    doc = apply_overrides(doc, args.set or [])
    config_from_dict({k: v for k, v in doc.items()
                      if k not in ("spots", "redundancy", "p_b0", "mode", "seed")})
    grid = _grid_from_args(args)
    out = _out_dir(args.out)

    def progress(done, total, key):
        if not args.quiet:
            print(f"[{done}/{total}] {key}", flush=True)

    result = run_sweep(doc, grid, out, jobs=args.jobs, resume=args.resume,
                       progress=progress)
    print(f"mesh rows: {len(result.rows)}  failures: {len(result.failures)}  "
          f"skipped (resume): {result.skipped}")
    print(f"outputs in {result.out_dir}")
    print((result.out_dir / "summary.txt").read_text(), end="")
    if args.figures:
        for path in render_report(result.out_dir):
            print(f"figure: {path}")
    return EXIT_RUN if result.failures else EXIT_OK


def cmd_verify(args) -> int:
    checks = run_all_checks()
    failed = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        line = f"[{status}] {check.category}: {check.name}"
        if check.detail and (args.verbose or not check.passed):
            line += f" ({check.detail})"
        print(line)
        failed += 0 if check.passed else 1
    categories = sorted({c.category for c in checks})
    print(f"{len(checks) - failed}/{len(checks)} checks passed "
          f"across {len(categories)} categories: {', '.join(categories)}")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def cmd_paths(args) -> int:
    topo = ralgebra.QuantumTopology.from_json(args.topology)
    try:
        path, sig = ralgebra.best_path(topo, args.src, args.dst)
    except ralgebra.Unreachable:
        print(f"unreachable: no path from {args.src} to {args.dst}")
        return EXIT_RUN
    print(" -> ".join(str(n) for n in path))
    print(f"hops={sig.hops} bell_pairs_per_s={sig.bell_pairs!r} overhead={sig.overhead!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    written = render_report(args.sweep_dir, out_dir=args.out, trust_csv=args.trust_csv)
    if not written:
        print("nothing to render: no mesh.csv or trust series found", file=sys.stderr)
        return EXIT_RUN
    for path in written:
        print(f"figure: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permaqnet",
        description="Trustworthiness simulator for a harsh-environment IoT "
                    "telemetry network with a quantum consensus plane.")
    parser.add_argument("--version", action="version", version=f"permaqnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and print KPIs")
    run_p.add_argument("--config", help="scenario JSON file (defaults apply if omitted)")
    run_p.add_argument("--seed", type=int, help="master seed override")
    run_p.add_argument("--out", help="also write run.csv into this directory")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override, e.g. lora.error_p=0.2")
    run_p.add_argument("--trust-csv", help="export the per-sensor trust series to this CSV")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run the full scenario grid")
    sweep_p.add_argument("--config", help="base scenario JSON file")
    sweep_p.add_argument("--out", help="output directory (default ./out)")
    sweep_p.add_argument("--jobs", type=int, help="parallel worker processes")
    sweep_p.add_argument("--seeds", type=int, default=10, help="seeds per cell")
    sweep_p.add_argument("--modes", help="comma-separated mode subset")
    sweep_p.add_argument("--spots", help="comma-separated spot counts (default 32,64)")
    sweep_p.add_argument("--redundancy", help="comma-separated redundancy values")
    sweep_p.add_argument("--pb0-min", type=float, default=1e-3)
    sweep_p.add_argument("--pb0-max", type=float, default=1e-1)
    sweep_p.add_argument("--pb0-points", type=int, default=9)
    sweep_p.add_argument("--linear-pb0", action="store_true",
                         help="space fault probabilities linearly instead of log")
    sweep_p.add_argument("--resume", action="store_true",
                         help="skip cells already journaled in the output directory")
    sweep_p.add_argument("--figures", action="store_true",
                         help="render figures after the sweep")
    sweep_p.add_argument("--quiet", action="store_true")
    sweep_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep_p.set_defaults(func=cmd_sweep)

    verify_p = sub.add_parser("verify", help="run the analytic self-checks")
    verify_p.add_argument("--verbose", action="store_true")
    verify_p.set_defaults(func=cmd_verify)

    paths_p = sub.add_parser("paths", help="best path on a quantum topology file")
    paths_p.add_argument("--topology", required=True, help="topology JSON file")
    paths_p.add_argument("--src", required=True)
    paths_p.add_argument("--dst", required=True)
    paths_p.set_defaults(func=cmd_paths)

    report_p = sub.add_parser("report", help="render figures from sweep outputs")
    report_p.add_argument("--sweep-dir", required=True)
    report_p.add_argument("--out", help="figure output directory (default: sweep dir)")
    report_p.add_argument("--trust-csv", help="trust series CSV to plot")
    report_p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ralgebra.TopologyError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # run-level failure, not a usage error
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
