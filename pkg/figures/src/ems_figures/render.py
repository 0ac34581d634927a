"""Renderers for the four figure kinds.

Output is SVG by default (PNG when the job's output path ends in .png) and
deterministic for identical inputs and tool versions: the SVG hash salt is
pinned and no timestamps are embedded.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ems-figures"

import matplotlib.pyplot as plt
import numpy as np

from .jobs import CUT, PHASE_MAPS, SWEEP_OVERLAY, UV_MAP, FigureJob


class ColumnError(ValueError):
    """Input CSV lacks a column the renderer needs; message names it."""


class EmptyInputError(ValueError):
    pass


def read_csv_columns(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInputError(f"{path}: empty CSV")
        for col in required:
            if col not in reader.fieldnames:
                raise ColumnError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    out = {}
    for col in reader.fieldnames:
        out[col] = np.array([float(r[col]) for r in rows])
    return out


def _save(fig, output: Path) -> None:
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, metadata=None if output.suffix == ".png"
                else {"Date": None})
    plt.close(fig)


def _curve_db(data: dict[str, np.ndarray], normalized: bool) -> np.ndarray:
    if normalized:
        return data["f_db"]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(data["f_abs"])


def render_cut(job: FigureJob) -> None:
    """Single phi-cut; adds the ideal-reference curve when the exporting
    command included it (legend ideal vs OTP)."""
    data = read_csv_columns(job.inputs[0], ("theta_deg", "f_db", "f_abs"))
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    label = job.labels[0] if job.labels else "OTP"
    if "f_db_ideal" in data:
        ideal = data["f_db_ideal"] if job.normalized else \
            10.0 * np.log10(np.maximum(data["f_abs_ideal"], 1e-300))
        ax.plot(data["theta_deg"], ideal, color="0.55", lw=1.2, label="ideal")
    ax.plot(data["theta_deg"], _curve_db(data, job.normalized), color="C3",
            lw=1.4, label=label)
    ax.set_xlabel(r"$\theta$ [deg]")
    ax.set_ylabel("pattern [dB]" if job.normalized else "pattern [dB abs]")
    if job.normalized:
        ax.set_ylim(*job.ylim)
    ax.set_xlim(data["theta_deg"].min(), data["theta_deg"].max())
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=9)
    if job.title:
        ax.set_title(job.title)
    fig.tight_layout()
    _save(fig, job.output)


def render_sweep_overlay(job: FigureJob) -> None:
    """One curve per input pattern file, shared axes."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for i, path in enumerate(job.inputs):
        data = read_csv_columns(path, ("theta_deg", "f_db", "f_abs"))
        label = job.labels[i] if i < len(job.labels) else path.stem
        ax.plot(data["theta_deg"], _curve_db(data, job.normalized), lw=1.3,
                label=label)
    ax.set_xlabel(r"$\theta$ [deg]")
    ax.set_ylabel("pattern [dB]" if job.normalized else "pattern [dB abs]")
    if job.normalized:
        ax.set_ylim(*job.ylim)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=9)
    if job.title:
        ax.set_title(job.title)
    fig.tight_layout()
    _save(fig, job.output)


def _cell_map(data: dict[str, np.ndarray], column: str) -> np.ndarray:
    p = data["p"].astype(int)
    q = data["q"].astype(int)
    grid = np.full((p.max(), q.max()), np.nan)
    grid[p - 1, q - 1] = data[column]
    return grid


def render_phase_maps(job: FigureJob) -> None:
    """Triptych: target phase profile, realized phases, fuse-state map."""
    data = read_csv_columns(
        job.inputs[0],
        ("p", "q", "ideal_deg", "realized_deg", "residual_deg", "state"))
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
    panels = [("ideal_deg", "target phase [deg]", "twilight", (-180, 180)),
              ("realized_deg", "realized phase [deg]", "twilight", (-180, 180)),
              ("state", "fuse state (1 = intact)", "gray", (0, 1))]
    for ax, (col, title, cmap, (vmin, vmax)) in zip(axes, panels):
        grid = _cell_map(data, col)
        im = ax.imshow(grid.T, origin="lower", cmap=cmap, vmin=vmin,
                       vmax=vmax, interpolation="nearest",
                       extent=(0.5, grid.shape[0] + 0.5,
                               0.5, grid.shape[1] + 0.5))
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("p")
        ax.set_ylabel("q")
        fig.colorbar(im, ax=ax, shrink=0.85)
    if job.title:
        fig.suptitle(job.title)
    fig.tight_layout()
    _save(fig, job.output)


def render_uv_map(job: FigureJob) -> None:
    """Direction-cosine heat map; samples outside the unit disc are blank."""
    data = read_csv_columns(job.inputs[0], ("u", "v", "f_db", "f_abs"))
    u, v = data["u"], data["v"]
    us = np.unique(u)
    vs = np.unique(v)
    iu = np.searchsorted(us, u)
    iv = np.searchsorted(vs, v)
    img = np.full((vs.size, us.size), np.nan)
    img[iv, iu] = _curve_db(data, job.normalized)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(img, origin="lower", extent=(us.min(), us.max(),
                                                vs.min(), vs.max()),
                   cmap="viridis", vmin=job.ylim[0],
                   vmax=job.ylim[1] if job.normalized else None,
                   interpolation="nearest")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_aspect("equal")
    fig.colorbar(im, ax=ax, label="pattern [dB]")
    if job.title:
        ax.set_title(job.title)
    fig.tight_layout()
    _save(fig, job.output)


_RENDERERS = {
    CUT: render_cut,
    SWEEP_OVERLAY: render_sweep_overlay,
    PHASE_MAPS: render_phase_maps,
    UV_MAP: render_uv_map,
}


def render(job: FigureJob) -> Path:
    """Render one job; raises before touching the output on bad inputs."""
    _RENDERERS[job.kind](job)
    return job.output
