"""Command-line front end: JSON run configs in, CSV/JSON artifacts out.

Commands
--------
ems-forge synthesize  --config cfg.json --out dir [--uv] [--compare-ideal]
ems-forge pattern     --config cfg.json --out dir [--states s.csv] [--uv]
                      [--compare-ideal]
ems-forge sweep       --config cfg.json --out dir
ems-forge design-atom --config cfg.json --out dir [--seed N]

Exit codes: 0 success, 2 configuration error, 3 unsupported operation,
4 numerical failure. All angles in config files and artifacts are degrees;
output files are written atomically and contain no timestamps, so reruns
are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conventions import (TM, Direction, EmsLayout, Frequency, IncidentWave)
from .madopt import (MadCostConfig, SwarmConfig, design_meta_atom,
                     frequency_response, frequency_response_csv)
from .pattern import (FarFieldPattern, NoPeakError, PanelConfiguration,
                      PhiCut, StateMatrix, UvGrid, export_pattern_csv,
                      pattern_factorized, pattern_metrics)
from .reflection import (DEFAULT_GRID_CAPACITANCE_SCALE, FuseModel,
                         MetaAtomGeometry, Substrate, SurrogateProvider,
                         TabulatedProvider, load_reflection_table)
from .synthesis import (SynthesisSpec, ideal_reference_pattern,
                        load_states_csv, report_to_json, save_states_csv,
                        synthesize)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3
EXIT_NUMERICAL = 4

SCHEMA = "ems-forge/run/v1"


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field path."""


class UnsupportedOperationError(ValueError):
    pass


def _get(cfg: dict, path: str, default=None, required=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required config field: {path}")
            return default
        node = node[part]
    return node


@dataclass
class RunConfig:
    """Validated run configuration (angles already converted to radians
    where they enter domain objects)."""

    scenario: str
    wave: IncidentWave
    layout: EmsLayout
    geometry: MetaAtomGeometry
    provider: object
    provider_kind: str
    target: Direction
    cut: PhiCut
    uv_grid: UvGrid
    optimizer: dict | None
    raw: dict


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    schema = _get(raw, "schema", required=True)
    if schema != SCHEMA:
        raise ConfigError(f"schema: expected {SCHEMA!r}, got {schema!r}")

    freq_hz = float(_get(raw, "wave.freq_hz", required=True))
    theta_inc = float(_get(raw, "wave.theta_inc_deg", 0.0))
    phi_inc = float(_get(raw, "wave.phi_inc_deg", 0.0))
    pol = _get(raw, "wave.pol", TM)
    e0 = float(_get(raw, "wave.e0", 1.0))
    phase0 = float(_get(raw, "wave.phase0_deg", 0.0))
    if not -90.0 <= theta_inc <= 90.0:
        raise ConfigError("wave.theta_inc_deg: must lie in [-90, 90]")
    try:
        wave = IncidentWave(Frequency(freq_hz),
                            Direction.from_degrees(theta_inc, phi_inc),
                            polarization=pol, amplitude_e0=e0,
                            phase0=float(np.radians(phase0)))
    except ValueError as exc:
        raise ConfigError(f"wave: {exc}") from None

    lam = wave.freq.wavelength
    P = int(_get(raw, "layout.p", required=True))
    Q = int(_get(raw, "layout.q", required=True))
    dx = _get(raw, "layout.dx_m")
    dy = _get(raw, "layout.dy_m")
    if dx is None:
        dx = float(_get(raw, "layout.dx_over_lambda", 0.45)) * lam
    if dy is None:
        dy = float(_get(raw, "layout.dy_over_lambda", 0.45)) * lam
    try:
        layout = EmsLayout(P, Q, float(dx), float(dy))
    except ValueError as exc:
        raise ConfigError(f"layout: {exc}") from None

    geometry = _load_geometry(raw, layout)
    provider, kind = _load_provider(raw, path.parent)

    theta_refl = float(_get(raw, "target.theta_refl_deg", 0.0))
    phi_refl = float(_get(raw, "target.phi_refl_deg", 0.0))
    if not -90.0 <= theta_refl <= 90.0:
        raise ConfigError("target.theta_refl_deg: must lie in [-90, 90]")
    target = Direction.from_degrees(theta_refl, phi_refl)

    phi_cut = float(_get(raw, "grid.phi_cut_deg", 0.0))
    t0 = float(_get(raw, "grid.theta_start_deg", -90.0))
    t1 = float(_get(raw, "grid.theta_stop_deg", 90.0))
    step = float(_get(raw, "grid.theta_step_deg", 0.25))
    if step <= 0 or t1 <= t0:
        raise ConfigError("grid: need theta_stop_deg > theta_start_deg and "
                          "a positive theta_step_deg")
    cut = PhiCut(phi=float(np.radians(phi_cut)),
                 theta=np.radians(np.arange(t0, t1 + 1e-9, step)))
    uv_n = int(_get(raw, "grid.uv_points", 201))
    uv_grid = UvGrid(uv_n, uv_n)

    optimizer = _get(raw, "optimizer")
    return RunConfig(scenario=str(_get(raw, "scenario", path.stem)),
                     wave=wave, layout=layout, geometry=geometry,
                     provider=provider, provider_kind=kind, target=target,
                     cut=cut, uv_grid=uv_grid, optimizer=optimizer, raw=raw)


def _load_geometry(raw: dict, layout: EmsLayout) -> MetaAtomGeometry:
    bounds_pct = float(_get(raw, "geometry.bounds_pct", 0.25))
    geom = MetaAtomGeometry.reference(cell_spacing=layout.dx,
                                      bounds_pct=bounds_pct)
    overrides = {
        "patch_edge": _get(raw, "geometry.patch_edge_m"),
        "pin_radius": _get(raw, "geometry.pin_radius_m"),
        "strip_length": _get(raw, "geometry.strip_length_m"),
        "cell_spacing": _get(raw, "geometry.cell_spacing_m"),
    }
    values = geom.values()
    for i, name in enumerate(geom.names):
        if overrides.get(name) is not None:
            values[i] = float(overrides[name])
    try:
        return geom.with_values(values)
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def _load_provider(raw: dict, base_dir: Path):
    kind = _get(raw, "provider.kind", required=True)
    if kind == "tabulated":
        rel = _get(raw, "provider.path", required=True)
        table_path = Path(rel)
        if not table_path.is_absolute():
            table_path = base_dir / table_path
        if not table_path.exists():
            raise ConfigError(f"provider.path: file not found: {table_path}")
        interp = _get(raw, "provider.interpolation", "nearest")
        inc = _get(raw, "provider.incidence_deg", [0.0, 0.0])
        try:
            table = load_reflection_table(
                table_path.read_text(),
                incidence=Direction.from_degrees(float(inc[0]), float(inc[1])),
                interpolation=interp)
        except ValueError as exc:
            raise ConfigError(f"provider.path: {exc}") from None
        return TabulatedProvider(table), kind
    if kind == "surrogate":
        try:
            substrate = Substrate(
                eps_r=float(_get(raw, "provider.substrate.eps_r", 3.66)),
                tan_delta=float(_get(raw, "provider.substrate.tan_delta", 4.0e-3)),
                thickness=float(_get(raw, "provider.substrate.thickness_m", 5.1e-4)))
            broken = _get(raw, "provider.fuse.broken", "open")
            if broken == "open":
                broken_branch = None
            else:
                broken_branch = (float(broken["r_ohm"]), float(broken["l_h"]))
            fuse = FuseModel(
                intact_resistance=float(
                    _get(raw, "provider.fuse.intact_resistance_ohm", 0.6)),
                intact_inductance=float(
                    _get(raw, "provider.fuse.intact_inductance_h", 3.0e-9)),
                broken_branch=broken_branch)
            scale = float(_get(raw, "provider.calibration.grid_capacitance_scale",
                               DEFAULT_GRID_CAPACITANCE_SCALE))
            band = _get(raw, "provider.calibration.band_hz", [1.0e9, 12.0e9])
            provider = SurrogateProvider(substrate=substrate, fuse=fuse,
                                         grid_capacitance_scale=scale,
                                         band=(float(band[0]), float(band[1])))
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"provider: {exc}") from None
        return provider, kind
    raise ConfigError(f"provider.kind: must be 'tabulated' or 'surrogate', "
                      f"got {kind!r}")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pattern_csv_text(pattern: FarFieldPattern, extra=None) -> str:
    import io
    buf = io.StringIO()
    export_pattern_csv(pattern, buf, extra_columns=extra)
    return buf.getvalue()


def _metrics_json(pattern: FarFieldPattern) -> str:
    m = pattern_metrics(pattern)
    payload = {
        "peak_theta_deg": m.peak_theta_deg,
        "peak_phi_deg": m.peak_phi_deg,
        "peak_value": m.peak_value,
        "peak_db_abs": 10.0 * np.log10(m.peak_value),
        "hpbw_deg": m.hpbw_deg,
        "lobes": [{"theta_deg": lb.theta_deg, "phi_deg": lb.phi_deg,
                   "level_db": lb.level_db} for lb in m.lobes],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _phase_maps_csv(report, layout: EmsLayout) -> str:
    lines = ["p,q,x_m,y_m,ideal_deg,realized_deg,residual_deg,state"]
    xs, ys = layout.cell_x, layout.cell_y
    xi = np.degrees(report.ideal_profile.xi)
    re_ = np.degrees(report.realized_phases)
    rs = np.degrees(report.residuals)
    s = report.states.s
    for p in range(layout.P):
        for q in range(layout.Q):
            lines.append(
                f"{p + 1},{q + 1},{xs[p]:.10g},{ys[q]:.10g},"
                f"{xi[p, q]:.10g},{re_[p, q]:.10g},{rs[p, q]:.10g},{s[p, q]}")
    return "\n".join(lines) + "\n"


def _synthesis_spec(rc: RunConfig) -> SynthesisSpec:
    return SynthesisSpec(direction_refl=rc.target, wave=rc.wave,
                         layout=rc.layout, geometry=rc.geometry,
                         provider=rc.provider)


def cmd_synthesize(rc: RunConfig, out: Path, uv: bool, compare_ideal: bool) -> int:
    spec = _synthesis_spec(rc)
    report = synthesize(spec)
    cfg = PanelConfiguration(rc.layout, rc.geometry, report.states, rc.provider)
    pattern = pattern_factorized(cfg, rc.wave, rc.cut)

    import io
    buf = io.StringIO()
    save_states_csv(report.states, buf)
    _atomic_write(out / "states.csv", buf.getvalue())
    _atomic_write(out / "report.json", report_to_json(report, spec) + "\n")
    _atomic_write(out / "phase_maps.csv", _phase_maps_csv(report, rc.layout))

    extra = None
    if compare_ideal:
        ideal = ideal_reference_pattern(spec, rc.cut)
        extra = {"f_abs_ideal": ideal.values,
                 "f_db_ideal": ideal.peak_normalized_db()}
    _atomic_write(out / "cut.csv", _pattern_csv_text(pattern, extra))
    _atomic_write(out / "metrics.json", _metrics_json(pattern) + "\n")
    if uv:
        uv_pat = pattern_factorized(cfg, rc.wave, rc.uv_grid)
        _atomic_write(out / "uv.csv", _pattern_csv_text(uv_pat))
    return EXIT_OK


def cmd_pattern(rc: RunConfig, out: Path, states_path: str | None,
                uv: bool, compare_ideal: bool) -> int:
    if states_path is None:
        states = StateMatrix.intact(rc.layout.P, rc.layout.Q)
    else:
        p = Path(states_path)
        if not p.exists():
            raise ConfigError(f"states: file not found: {p}")
        states = load_states_csv(p.open())
        if states.shape != (rc.layout.P, rc.layout.Q):
            raise ConfigError(
                f"states: dimension mismatch, expected "
                f"({rc.layout.P}, {rc.layout.Q}), got {states.shape}")
    cfg = PanelConfiguration(rc.layout, rc.geometry, states, rc.provider)
    pattern = pattern_factorized(cfg, rc.wave, rc.cut)
    extra = None
    if compare_ideal:
        ideal = ideal_reference_pattern(_synthesis_spec(rc), rc.cut)
        extra = {"f_abs_ideal": ideal.values,
                 "f_db_ideal": ideal.peak_normalized_db()}
    _atomic_write(out / "cut.csv", _pattern_csv_text(pattern, extra))
    _atomic_write(out / "metrics.json", _metrics_json(pattern) + "\n")
    if uv:
        uv_pat = pattern_factorized(cfg, rc.wave, rc.uv_grid)
        _atomic_write(out / "uv.csv", _pattern_csv_text(uv_pat))
    return EXIT_OK


SWEEP_SUMMARY_HEADER = ("sweep_value,peak_theta_deg,peak_db,hpbw_deg,"
                        "second_lobe_theta_deg,second_lobe_db")


def _sweep_point(rc: RunConfig, out: Path, label: str,
                 theta_inc_deg: float, theta_refl_deg: float,
                 P: int, Q: int) -> tuple[str, str]:
    wave = IncidentWave(rc.wave.freq,
                        Direction.from_degrees(theta_inc_deg, 0.0),
                        polarization=rc.wave.polarization,
                        amplitude_e0=rc.wave.amplitude_e0,
                        phase0=rc.wave.phase0)
    layout = EmsLayout(P, Q, rc.layout.dx, rc.layout.dy)
    geometry = rc.geometry
    spec = SynthesisSpec(Direction.from_degrees(theta_refl_deg, 0.0), wave,
                         layout, geometry, rc.provider)
    report = synthesize(spec)
    cfg = PanelConfiguration(layout, geometry, report.states, rc.provider)
    pattern = pattern_factorized(cfg, wave, rc.cut)
    m = pattern_metrics(pattern)
    csv_name = f"pattern_{label}.csv"
    _atomic_write(out / csv_name, _pattern_csv_text(pattern))
    second = m.lobes[0] if m.lobes else None
    row = ",".join([
        label,
        format(m.peak_theta_deg, ".10g"),
        format(10.0 * np.log10(m.peak_value), ".10g"),
        format(m.hpbw_deg, ".10g") if m.hpbw_deg is not None else "nan",
        format(second.theta_deg, ".10g") if second else "nan",
        format(second.level_db, ".10g") if second else "nan",
    ])
    return csv_name, row


def cmd_sweep(rc: RunConfig, out: Path) -> int:
    sweep = rc.raw.get("sweep")
    if not sweep:
        raise ConfigError("missing required config field: sweep")
    kind = sweep.get("kind")
    theta_inc0 = float(np.degrees(rc.wave.direction.theta))
    theta_refl0 = float(np.degrees(rc.target.theta))
    if rc.target.phi > np.pi / 2:  # signed-cut target on the phi+180 side
        theta_refl0 = -theta_refl0
    points: list[tuple[str, float, float, int, int]] = []
    if kind == "aperture":
        values = sweep.get("values") or []
        points = [(str(int(v)), theta_inc0, theta_refl0, int(v), int(v))
                  for v in values]
    elif kind == "scan":
        values = sweep.get("values") or []
        points = [(format(float(v), "g"), theta_inc0, float(v),
                   rc.layout.P, rc.layout.Q) for v in values]
    elif kind == "incidence":
        pairs = sweep.get("pairs") or []
        points = [(format(float(ti), "g"), float(ti), float(tr),
                   rc.layout.P, rc.layout.Q) for ti, tr in pairs]
    else:
        raise ConfigError("sweep.kind: must be 'aperture', 'scan' or "
                          "'incidence'")
    if not points:
        raise ConfigError("sweep: value list is empty")

    max_workers = int(os.environ.get("EMS_FORGE_THREADS", "1") or "1")
    rows: list[str | None] = [None] * len(points)

    def run_point(i):
        label, ti, tr, P, Q = points[i]
        _, row = _sweep_point(rc, out, label, ti, tr, P, Q)
        rows[i] = row

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(run_point, range(len(points))))
    else:
        for i in range(len(points)):
            run_point(i)
    _atomic_write(out / "summary.csv",
                  SWEEP_SUMMARY_HEADER + "\n" + "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_design_atom(rc: RunConfig, out: Path, seed: int | None) -> int:
    if rc.optimizer is None:
        raise ConfigError("missing required config field: optimizer")
    if rc.provider_kind == "tabulated":
        raise UnsupportedOperationError(
            "design-atom needs the surrogate provider: a tabulated provider "
            "has no geometry dependence to optimize")
    opt = rc.optimizer
    cost_cfg = MadCostConfig(
        wave=rc.wave, provider=rc.provider,
        beta1=float(opt.get("beta1", 1.0)),
        beta2=float(opt.get("beta2", 0.1)),
        magnitude_floor=float(opt.get("magnitude_floor", 1e-6)))
    swarm = SwarmConfig(
        population=int(opt.get("population", 20)),
        max_iterations=int(opt.get("iterations", 100)),
        rng_seed=int(seed if seed is not None else opt.get("seed", 0)),
        stagnation_window=int(opt.get("stagnation_window", 30)),
        stagnation_tol=float(opt.get("stagnation_tol", 1e-6)))
    result = design_meta_atom(cost_cfg, swarm, rc.geometry)
    _atomic_write(out / "mad_result.json",
                  json.dumps(result.to_json_dict(), indent=2, sort_keys=True)
                  + "\n")
    band_spec = opt.get("response_band_hz", [4.5e9, 6.5e9, 41])
    band = np.linspace(float(band_spec[0]), float(band_spec[1]),
                       int(band_spec[2]))
    rows = frequency_response(result.g_opt, rc.provider, band, rc.wave)
    import io
    buf = io.StringIO()
    frequency_response_csv(rows, buf)
    _atomic_write(out / "frequency_response.csv", buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ems-forge",
        description="Design and analyze one-time-programmable passive "
                    "electromagnetic skins.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synthesize", "pattern", "sweep", "design-atom"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        if name in ("synthesize", "pattern"):
            p.add_argument("--uv", action="store_true")
            p.add_argument("--compare-ideal", action="store_true")
        if name == "pattern":
            p.add_argument("--states")
        if name == "design-atom":
            p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        rc = load_run_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "synthesize":
            return cmd_synthesize(rc, out, args.uv, args.compare_ideal)
        if args.command == "pattern":
            return cmd_pattern(rc, out, args.states, args.uv,
                               args.compare_ideal)
        if args.command == "sweep":
            return cmd_sweep(rc, out)
        if args.command == "design-atom":
            return cmd_design_atom(rc, out, args.seed)
        raise UnsupportedOperationError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"ems-forge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedOperationError as exc:
        print(f"ems-forge: unsupported operation: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (NoPeakError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"ems-forge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
