"""KPI computation, scenario sweeps and result files.

Four indicators summarize a run: the faulty sensing ratio (wrong stored
values over produced values), the packet delivery ratio (delivered over
sent frames on every link), the successful transaction rate (correct
values reaching the control center in time over all transactions) and
the byzantine node tolerance (the supported faulty fraction of a spot's
group, a design property of the group size).

A sweep enumerates the full grid of (spots, redundancy, fault
probability, mode, seed) cells, runs each cell in a worker process,
and emits: a mesh CSV with one row per cell, a per-mode max/mean summary,
a best-mode mask with the feasibility threshold applied, and
gnuplot-compatible matrix files for surface plots.  Completed cells are
journaled so an interrupted sweep resumes without recomputation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .scenario import ConfigError, ScenarioConfig, config_from_dict
from .simulation import RunLog, run_scenario
from .trustnet import OperationMode

STR_FEASIBILITY_THRESHOLD = 0.6

ALL_MODES = [m.value for m in OperationMode]

MESH_COLUMNS = ["spots", "redundancy", "p_b0", "mode", "seed",
                "fsr", "pdr", "str", "bnt"]


@dataclass(frozen=True)
class RunMetrics:
    """KPI ratios of one run; None flags an undefined (0/0) indicator."""

    fsr: Optional[float]
    pdr: Optional[float]
    str_rate: Optional[float]
    bnt: float
    transactions: int
    successes: int
    sense_values: int
    sense_faulty: int
    frames_sent: int
    frames_delivered: int


def compute_kpis(log: RunLog) -> RunMetrics:
    """Exact counter quotients; zero denominators yield flagged None."""
    return RunMetrics(
        fsr=log.sense_faulty / log.sense_values if log.sense_values else None,
        pdr=log.frames_delivered / log.frames_sent if log.frames_sent else None,
        str_rate=log.successes / log.transactions if log.transactions else None,
        bnt=log.tolerated_fraction,
        transactions=log.transactions,
        successes=log.successes,
        sense_values=log.sense_values,
        sense_faulty=log.sense_faulty,
        frames_sent=log.frames_sent,
        frames_delivered=log.frames_delivered,
    )


def p_b0_points(low: float = 1e-3, high: float = 1e-1, count: int = 9,
                spacing: str = "log") -> list[float]:
    """Fault-probability axis; log spacing matches the mesh rendering."""
    if count < 1:
        raise ValueError("need at least one point")
    if count == 1:
        return [low]
    if spacing == "log":
        step = (math.log10(high) - math.log10(low)) / (count - 1)
        return [round(10 ** (math.log10(low) + i * step), 12) for i in range(count)]
    if spacing == "linear":
        step = (high - low) / (count - 1)
        return [round(low + i * step, 12) for i in range(count)]
    raise ValueError(f"unknown spacing {spacing!r}")


@dataclass(frozen=True)
class SweepGrid:
    spots: tuple = (32, 64)
    redundancy: tuple = (1, 2, 3, 4, 5)
    p_b0: tuple = tuple(p_b0_points())
    modes: tuple = tuple(ALL_MODES)
    seeds: tuple = tuple(range(10))

    def cells(self) -> list["Cell"]:
        out = []
        index = 0
        for spots in self.spots:
            for red in self.redundancy:
                for p in self.p_b0:
                    for mode in self.modes:
                        if OperationMode(mode).uses_consensus and red < 4:
                            continue  # rejected at scenario load; not a valid cell
                        for seed in self.seeds:
                            out.append(Cell(index, spots, red, p, mode, seed))
                            index += 1
        return out


@dataclass(frozen=True)
class Cell:
    index: int
    spots: int
    redundancy: int
    p_b0: float
    mode: str
    seed: int

    def key(self) -> str:
        return f"{self.spots}/{self.redundancy}/{self.p_b0!r}/{self.mode}/{self.seed}"


def run_cell(base_doc: dict, cell: Cell) -> dict:
    """One sweep cell -> a mesh row dict (deterministic in (cell, seed))."""
    doc = dict(base_doc)
    doc.update({"spots": cell.spots, "redundancy": cell.redundancy,
                "p_b0": cell.p_b0, "mode": cell.mode, "seed": cell.seed})
    cfg = config_from_dict(doc)
    kpis = compute_kpis(run_scenario(cfg))
    return {
        "spots": cell.spots,
        "redundancy": cell.redundancy,
        "p_b0": cell.p_b0,
        "mode": cell.mode,
        "seed": cell.seed,
        "fsr": kpis.fsr,
        "pdr": kpis.pdr,
        "str": kpis.str_rate,
        "bnt": kpis.bnt,
    }


def _worker(args) -> tuple[str, dict]:
    base_doc, cell = args
    try:
        return cell.key(), run_cell(base_doc, cell)
    except Exception as exc:  # cell failures recorded, sweep continues
        return cell.key(), {"error": f"{type(exc).__name__}: {exc}",
                            "spots": cell.spots, "redundancy": cell.redundancy,
                            "p_b0": cell.p_b0, "mode": cell.mode, "seed": cell.seed}


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return repr(value) if isinstance(value, float) else str(value)


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def mesh_rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MESH_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in MESH_COLUMNS])
    return buf.getvalue()


def cell_means(rows: list[dict]) -> dict:
    """Per-(spots, redundancy, p_b0, mode) mean STR over seeds."""
    acc: dict = {}
    for row in rows:
        if row.get("str") is None:
            continue
        key = (row["spots"], row["redundancy"], row["p_b0"], row["mode"])
        acc.setdefault(key, []).append(row["str"])
    return {key: sum(v) / len(v) for key, v in acc.items()}


def summarize(rows: list[dict]) -> dict:
    """Per-mode maximum and average STR over the grid's cell means."""
    means = cell_means(rows)
    by_mode: dict = {}
    for (_, _, _, mode), value in means.items():
        by_mode.setdefault(mode, []).append(value)
    return {mode: {"max": max(vals), "avg": sum(vals) / len(vals)}
            for mode, vals in sorted(by_mode.items())}


def summary_to_csv(summary: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode", "max_str", "avg_str"])
    for mode in ALL_MODES:
        if mode in summary:
            writer.writerow([mode, _fmt(summary[mode]["max"]), _fmt(summary[mode]["avg"])])
    return buf.getvalue()


def summary_to_table(summary: dict) -> str:
    """Aligned text table, one row for max and one for average."""
    modes = [m for m in ALL_MODES if m in summary]
    width = max(len(m) for m in modes) if modes else 8
    head = "metric  " + "  ".join(m.rjust(width) for m in modes)
    maxline = "max     " + "  ".join(f"{summary[m]['max']:.2f}".rjust(width) for m in modes)
    avgline = "average " + "  ".join(f"{summary[m]['avg']:.2f}".rjust(width) for m in modes)
    return "\n".join([head, maxline, avgline]) + "\n"


def best_mode_rows(rows: list[dict]) -> list[dict]:
    """Best mode per grid point with the feasibility threshold applied."""
    means = cell_means(rows)
    points: dict = {}
    for (spots, red, p_b0, mode), value in means.items():
        points.setdefault((spots, red, p_b0), {})[mode] = value
    out = []
    for (spots, red, p_b0), by_mode in sorted(points.items()):
        best_mode, best = max(by_mode.items(), key=lambda kv: (kv[1], kv[0]))
        out.append({"spots": spots, "redundancy": red, "p_b0": p_b0,
                    "best_mode": best_mode, "best_str": best,
                    "feasible": best >= STR_FEASIBILITY_THRESHOLD})
    return out


def best_mode_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spots", "redundancy", "p_b0", "best_mode", "best_str", "feasible"])
    for row in rows:
        writer.writerow([row["spots"], row["redundancy"], _fmt(row["p_b0"]),
                         row["best_mode"], _fmt(row["best_str"]),
                         int(row["feasible"])])
    return buf.getvalue()


def surface_matrix(rows: list[dict], mode: str) -> str:
    """Gnuplot nonuniform-matrix file: combos down, fault probability across."""
    means = cell_means(rows)
    combos = sorted({(s, r) for (s, r, _, m) in means if m == mode})
    p_values = sorted({p for (_, _, p, m) in means if m == mode})
    lines = [f"# STR surface for mode {mode}",
             "# row index i maps to (spots, redundancy) combo:"]
    for i, (s, r) in enumerate(combos):
        lines.append(f"#   {i} -> spots={s} redundancy={r}")
    lines.append(" ".join([str(len(p_values))] + [_fmt(p) for p in p_values]))
    for i, (s, r) in enumerate(combos):
        vals = [means.get((s, r, p, mode)) for p in p_values]
        lines.append(" ".join([str(i)] + [_fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"


@dataclass
class SweepResult:
    rows: list[dict]
    failures: list[dict]
    out_dir: Path
    completed: int = 0
    skipped: int = 0

    @property
    def mesh_path(self) -> Path:
        return self.out_dir / "mesh.csv"


def _load_parts(parts_path: Path) -> dict:
    done = {}
    if parts_path.exists():
        with open(parts_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                done[entry["key"]] = entry["row"]
    return done


def run_sweep(base_doc: dict, grid: SweepGrid, out_dir, jobs: int | None = None,
              resume: bool = False, progress=None) -> SweepResult:
    """Run every grid cell, journaling rows; emit the four result files.

    With ``resume=True`` previously journaled cells are skipped; the
    final files are regenerated from the full journal either way, so an
    interrupted-and-resumed sweep produces byte-identical outputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts_path = out_dir / "mesh.parts.jsonl"
    done = _load_parts(parts_path) if resume else {}
    if not resume and parts_path.exists():
        parts_path.unlink()
    cells = grid.cells()
    pending = [c for c in cells if c.key() not in done]
    jobs = jobs or os.cpu_count() or 1
    completed = 0
    with open(parts_path, "a") as journal:
        if jobs <= 1 or len(pending) <= 1:
            results = map(_worker, ((base_doc, c) for c in pending))
            for key, row in results:
                done[key] = row
                journal.write(json.dumps({"key": key, "row": row}) + "\n")
                journal.flush()
                completed += 1
                if progress is not None:
                    progress(completed, len(pending), key)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for key, row in pool.map(_worker, ((base_doc, c) for c in pending),
                                         chunksize=1):
                    done[key] = row
                    journal.write(json.dumps({"key": key, "row": row}) + "\n")
                    journal.flush()
                    completed += 1
                    if progress is not None:
                        progress(completed, len(pending), key)
    ordered = [done[c.key()] for c in cells if c.key() in done]
    rows = [r for r in ordered if "error" not in r]
    failures = [r for r in ordered if "error" in r]
    atomic_write_text(out_dir / "mesh.csv", mesh_rows_to_csv(rows))
    summary = summarize(rows)
    atomic_write_text(out_dir / "summary.csv", summary_to_csv(summary))
    atomic_write_text(out_dir / "summary.txt", summary_to_table(summary))
    atomic_write_text(out_dir / "best_mode.csv", best_mode_to_csv(best_mode_rows(rows)))
    for mode in sorted({r["mode"] for r in rows}):
        atomic_write_text(out_dir / f"surface_{mode}.dat", surface_matrix(rows, mode))
    if failures:
        atomic_write_text(out_dir / "failures.json",
                          json.dumps(failures, indent=2) + "\n")
    return SweepResult(rows=rows, failures=failures, out_dir=out_dir,
                       completed=completed, skipped=len(cells) - len(pending))
