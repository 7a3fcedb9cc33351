"""Figure rendering for sweep and trust outputs.

Renders the sweep mesh as one colored STR surface per operation mode
with the feasibility plane, a best-mode map where infeasible grid
points stay white, and the per-sensor trust dynamics of a single spot.
All figures are written to files next to the delimited outputs; nothing
opens a display.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import STR_FEASIBILITY_THRESHOLD, cell_means  # noqa: E402

MODE_COLORS = {
    "standard": "tab:gray",
    "social": "tab:green",
    "consensus": "tab:orange",
    "quantum-consensus": "tab:red",
    "social-consensus": "tab:purple",
    "social-quantum-consensus": "tab:blue",
}


def read_mesh_csv(path) -> list[dict]:
    rows = []
    with open(Path(path)) as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "spots": int(row["spots"]),
                "redundancy": int(row["redundancy"]),
                "p_b0": float(row["p_b0"]),
                "mode": row["mode"],
                "seed": int(row["seed"]),
                "str": None if row["str"] == "nan" else float(row["str"]),
            })
    return rows


def _axes(rows):
    combos = sorted({(r["spots"], r["redundancy"]) for r in rows})
    p_values = sorted({r["p_b0"] for r in rows})
    return combos, p_values


def render_str_surfaces(rows: list[dict], out_path) -> Path:
    """One 3D surface per mode over (spots x redundancy, fault probability)."""
    means = cell_means(rows)
    combos, p_values = _axes(rows)
    modes = sorted({r["mode"] for r in rows})
    cols = min(3, len(modes))
    rows_n = (len(modes) + cols - 1) // cols
    fig = plt.figure(figsize=(6 * cols, 5 * rows_n))
    xs = np.arange(len(combos))
    ys = np.log10(np.array(p_values))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    for k, mode in enumerate(modes):
        ax = fig.add_subplot(rows_n, cols, k + 1, projection="3d")
        Z = np.full(X.shape, np.nan)
        for i, combo in enumerate(combos):
            for j, p in enumerate(p_values):
                value = means.get((combo[0], combo[1], p, mode))
                if value is not None:
                    Z[i, j] = value
        masked = np.ma.masked_invalid(Z)
        ax.plot_surface(X, Y, masked, cmap="viridis", vmin=0, vmax=1,
                        edgecolor="k", linewidth=0.2)
        floor = np.full(X.shape, STR_FEASIBILITY_THRESHOLD)
        ax.plot_surface(X, Y, floor, color="red", alpha=0.15)
        ax.set_title(mode)
        ax.set_xticks(xs)
        ax.set_xticklabels([f"{s}x{r}" for s, r in combos], fontsize=6, rotation=60)
        ax.set_xlabel("spots x redundancy", fontsize=8)
        ax.set_ylabel("log10 fault probability", fontsize=8)
        ax.set_zlabel("STR", fontsize=8)
        ax.set_zlim(0, 1)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def render_best_mode_map(rows: list[dict], out_path) -> Path:
    """Best-mode map; grid points where no mode reaches the target stay white."""
    means = cell_means(rows)
    combos, p_values = _axes(rows)
    modes = sorted({r["mode"] for r in rows})
    img = np.ones((len(p_values), len(combos), 3))
    for i, combo in enumerate(combos):
        for j, p in enumerate(p_values):
            scored = [(means[(combo[0], combo[1], p, m)], m) for m in modes
                      if (combo[0], combo[1], p, m) in means]
            if not scored:
                continue
            best, mode = max(scored)
            if best >= STR_FEASIBILITY_THRESHOLD:
                img[j, i, :] = matplotlib.colors.to_rgb(MODE_COLORS.get(mode, "black"))
    fig, ax = plt.subplots(figsize=(9, 5))
    ax.imshow(img, origin="lower", aspect="auto")
    ax.set_xticks(range(len(combos)))
    ax.set_xticklabels([f"{s}x{r}" for s, r in combos], rotation=60, fontsize=7)
    ax.set_yticks(range(len(p_values)))
    ax.set_yticklabels([f"{p:.4g}" for p in p_values], fontsize=7)
    ax.set_xlabel("spots x redundancy")
    ax.set_ylabel("byzantine fault probability")
    ax.set_title(f"best mode where STR >= {STR_FEASIBILITY_THRESHOLD} (white = infeasible)")
    handles = [plt.Rectangle((0, 0), 1, 1, color=MODE_COLORS[m]) for m in modes
               if m in MODE_COLORS]
    ax.legend(handles, [m for m in modes if m in MODE_COLORS],
              loc="upper left", bbox_to_anchor=(1.02, 1.0), fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def read_trust_csv(path) -> list[tuple]:
    rows = []
    with open(Path(path)) as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["day"]), int(row["spot"]), int(row["sensor"]),
                         float(row["trust"])))
    return rows


def render_trust_dynamics(series: list[tuple], out_path, spot: int | None = None) -> Path:
    """Per-sensor trust curves of one measuring spot over time."""
    if spot is None:
        spot = series[0][1] if series else 0
    by_sensor: dict = {}
    for day, s, sensor, trust in series:
        if s == spot:
            by_sensor.setdefault(sensor, []).append((day, trust))
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for sensor, points in sorted(by_sensor.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                label=f"sensor {sensor}", linewidth=1.2)
    ax.set_xlabel("day")
    ax.set_ylabel("trust")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"social trust evolution, spot {spot}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def render_report(sweep_dir, out_dir=None, trust_csv=None) -> list[Path]:
    """Render every figure that the available outputs support."""
    sweep_dir = Path(sweep_dir)
    out_dir = Path(out_dir) if out_dir is not None else sweep_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    mesh = sweep_dir / "mesh.csv"
    if mesh.exists():
        rows = read_mesh_csv(mesh)
        if rows:
            written.append(render_str_surfaces(rows, out_dir / "str_surfaces.png"))
            written.append(render_best_mode_map(rows, out_dir / "best_mode_map.png"))
    if trust_csv is not None:
        series = read_trust_csv(trust_csv)
        if series:
            written.append(render_trust_dynamics(series, out_dir / "trust_dynamics.png"))
    return written
