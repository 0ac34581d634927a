"""Figure-job descriptions and the manifest that lists them.

Jobs never recompute any physics: every pixel derives from the CSV/JSON
files the main package exports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CUT = "cut"
SWEEP_OVERLAY = "sweep_overlay"
PHASE_MAPS = "phase_maps"
UV_MAP = "uv_map"
KINDS = (CUT, SWEEP_OVERLAY, PHASE_MAPS, UV_MAP)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class FigureJob:
    """One figure to render from already-exported artifacts."""

    kind: str
    inputs: tuple[Path, ...]
    output: Path
    labels: tuple[str, ...] = ()
    ylim: tuple[float, float] = (-40.0, 0.0)  # dB axis default
    normalized: bool = True
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ManifestError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ManifestError("figure job needs at least one input file")
        if self.output.suffix.lower() not in (".svg", ".png"):
            raise ManifestError("output must be .svg (default) or .png")


def load_manifest(path: str | Path) -> list[FigureJob]:
    path = Path(path)
    base = path.parent
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    jobs = []
    for i, entry in enumerate(raw.get("jobs", [])):
        try:
            jobs.append(FigureJob(
                kind=entry["kind"],
                inputs=tuple(base / p for p in entry["inputs"]),
                output=base / entry["output"],
                labels=tuple(entry.get("labels", ())),
                ylim=tuple(entry.get("ylim", (-40.0, 0.0))),
                normalized=bool(entry.get("normalized", True)),
                title=entry.get("title", ""),
            ))
        except KeyError as exc:
            raise ManifestError(f"job {i}: missing field {exc}") from None
    if not jobs:
        raise ManifestError("manifest lists no jobs")
    return jobs
