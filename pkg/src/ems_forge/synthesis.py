"""Closed-form synthesis of the binary fuse-state matrix.

The target compensation profile assigns each cell the reflection phase that
cancels the incident field's phase and imposes the linear ramp steering the
beam to the requested direction. Each cell then picks whichever of its two
available reflection phases is closer (wrapped distance, ties toward the
intact state). Because a phase profile is only defined up to a global
constant, the pipeline driver sweeps that constant and keeps the choice that
maximizes power at the target; for panels of a few hundred cells upward the
sweep is a no-op, but at very small apertures it recovers the jointly
optimal assignment that a fixed reference can miss.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .conventions import (TM, Direction, EmsLayout, IncidentWave, wrap_phase,
                          incident_field_at)
from .pattern import (FarFieldPattern, GridSamples, PanelConfiguration,
                      StateMatrix, UnsupportedPolarizationError, _metadata,
                      element_factor, pattern_factorized)
from .reflection import MetaAtomGeometry

REFERENCE_SWEEP_STEPS = 720  # global phase references tried by synthesize()


@dataclass(frozen=True)
class SynthesisSpec:
    """Target direction plus everything needed to evaluate the panel."""

    direction_refl: Direction
    wave: IncidentWave
    layout: EmsLayout
    geometry: MetaAtomGeometry
    provider: object

    def __post_init__(self):
        if self.wave.polarization != TM:
            raise UnsupportedPolarizationError(
                "synthesis is defined for TM illumination")


@dataclass(frozen=True, eq=False)
class PhaseProfile:
    """Per-cell target reflection phase, wrapped to (-pi, pi]."""

    xi: np.ndarray  # (P, Q) radians

    def __post_init__(self):
        arr = np.asarray(self.xi, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("phase profile must be finite")
        object.__setattr__(self, "xi", wrap_phase(arr))

    def shifted(self, offset: float) -> "PhaseProfile":
        return PhaseProfile(self.xi + offset)


@dataclass(frozen=True, eq=False)
class SynthesisReport:
    """States plus the phase bookkeeping behind them."""

    states: StateMatrix
    ideal_profile: PhaseProfile
    realized_phases: np.ndarray  # (P, Q) radians
    residuals: np.ndarray        # wrap(xi - realized), radians
    cost: float                  # 1 / F(target)
    burn_count: int

    def burn_sequence(self) -> list[tuple[int, int]]:
        """Cells to burn (s=0) in row-major order, 1-based indices."""
        idx = np.argwhere(self.states.s == 0)
        return [(int(p) + 1, int(q) + 1) for p, q in idx]


def ideal_phase_profile(spec: SynthesisSpec) -> PhaseProfile:
    """Per-cell reflection phase that collimates the beam on the target.

    The profile conjugates the incident field's phase at each cell and adds
    the steering ramp toward (theta_refl, phi_refl); realizing exactly this
    phase makes every cell's contribution arrive in phase at the target.
    """
    layout = spec.layout
    env = spec.wave.environment()
    X, Y = layout.cell_centers()
    e_phase = np.angle(incident_field_at(spec.wave, env, X, Y))
    d = spec.direction_refl
    ramp = env.wavenumber * (X * d.u + Y * d.v)
    return PhaseProfile(-(e_phase + ramp))


def _tm_phases(spec: SynthesisSpec) -> tuple[float, float]:
    g0 = spec.provider.evaluate(spec.geometry, 0, spec.wave)
    g1 = spec.provider.evaluate(spec.geometry, 1, spec.wave)
    return float(np.angle(g0.gamma_tm)), float(np.angle(g1.gamma_tm))


def quantize_states(spec: SynthesisSpec, profile: PhaseProfile) -> SynthesisReport:
    """Pick each cell's fuse state by nearest wrapped phase to the profile.

    Ties go to the intact state. If the two states share one phase the panel
    is left fully intact and a warning is issued (it still works as a
    specular reflector).
    """
    phi0, phi1 = _tm_phases(spec)
    xi = profile.xi
    if abs(wrap_phase(phi1 - phi0)) < 1e-15:
        warnings.warn("degenerate meta-atom: both states share one reflection "
                      "phase; leaving every fuse intact", stacklevel=2)
        states = StateMatrix.intact(spec.layout.P, spec.layout.Q)
    else:
        d1 = np.abs(wrap_phase(xi - phi1))
        d0 = np.abs(wrap_phase(xi - phi0))
        states = StateMatrix(np.where(d1 <= d0, 1, 0))
    realized = np.where(states.s == 1, phi1, phi0)
    residuals = wrap_phase(xi - realized)
    cfg = PanelConfiguration(spec.layout, spec.geometry, states, spec.provider)
    cost = cost_otpems(cfg, spec.wave, spec.direction_refl)
    return SynthesisReport(states=states, ideal_profile=profile,
                           realized_phases=realized, residuals=residuals,
                           cost=cost, burn_count=states.burn_count)


def _window_samples(u_c: float, v_c: float, half_width_deg: float) -> GridSamples:
    """Cut samples around a direction given by its direction cosines."""
    rho = float(np.hypot(u_c, v_c))
    phi_c = float(np.arctan2(v_c, u_c)) if rho > 1e-12 else 0.0
    theta_c = float(np.degrees(np.arcsin(min(rho, 1.0))))
    thetas = np.arange(theta_c - half_width_deg,
                       theta_c + half_width_deg + 1e-9, 0.25)
    thetas = np.radians(thetas[np.abs(thetas) <= 90.0])
    from .pattern import PhiCut
    return PhiCut(phi=phi_c, theta=thetas).samples()


def synthesize(spec: SynthesisSpec,
               reference_steps: int = REFERENCE_SWEEP_STEPS,
               image_guard: bool = True) -> SynthesisReport:
    """Full synthesis: compensation profile, reference sweep, quantization.

    The global constant of the phase profile is physically arbitrary, so it
    is swept over ``reference_steps`` values; the report records the chosen
    reference in its profile. By default the sweep maximizes power at the
    target among references that keep the two systematic 1-bit artifacts,
    the quantization image of the target about the specular direction and
    the specular residue itself, below the target lobe; if no reference
    achieves that (or with ``image_guard=False``) it maximizes target power
    alone.
    """
    base = ideal_phase_profile(spec)
    phi0, phi1 = _tm_phases(spec)
    g0c = spec.provider.evaluate(spec.geometry, 0, spec.wave).gamma_tm
    g1c = spec.provider.evaluate(spec.geometry, 1, spec.wave).gamma_tm
    layout = spec.layout
    env = spec.wave.environment()
    X, Y = layout.cell_centers()
    e_inc = incident_field_at(spec.wave, env, X, Y)
    d_t, d_i = spec.direction_refl, spec.wave.direction

    # lobe-resolution scale of the aperture, used to size comparison windows
    span = max(layout.P * layout.dx, layout.Q * layout.dy)
    cos_t = max(np.cos(d_t.theta), 0.2)
    hpbw_est_deg = np.degrees(0.886 * env.wavelength / (span * cos_t))
    half_width = max(1.5 * hpbw_est_deg, 1.5)

    k = env.wavenumber
    cells = np.stack([X.ravel(), Y.ravel()])

    def lobe_matrices(samples):
        a = element_factor(spec.wave, layout, samples)
        phase = np.exp(1j * k * (np.outer(samples.u, cells[0]) +
                                 np.outer(samples.v, cells[1])))
        return a, phase * e_inc.ravel()[None, :]

    a_bull, m_bull = lobe_matrices(_target_samples(d_t))
    guards = []
    if image_guard:
        guards.append(lobe_matrices(_window_samples(d_t.u, d_t.v, half_width)))
        for u_r, v_r in ((-2.0 * d_i.u - d_t.u, -2.0 * d_i.v - d_t.v),
                         (-d_i.u, -d_i.v)):
            if u_r * u_r + v_r * v_r > 1.0:
                continue
            sep = np.hypot(u_r - d_t.u, v_r - d_t.v)
            if np.degrees(sep) <= half_width:  # unresolvable from the target
                continue
            guards.append(lobe_matrices(_window_samples(u_r, v_r, half_width)))

    xi_flat = base.xi.ravel()
    best = (-1, -1.0, 0.0)  # (feasible, power at exact target, alpha)
    for alpha in np.linspace(0.0, 2.0 * np.pi, max(int(reference_steps), 1),
                             endpoint=False):
        shifted = xi_flat + alpha
        d1 = np.abs(wrap_phase(shifted - phi1))
        d0 = np.abs(wrap_phase(shifted - phi0))
        gam = np.where(d1 <= d0, g1c, g0c)
        f_target = float((a_bull * np.abs(m_bull @ gam) ** 2)[0])
        feasible = 1
        if guards:
            a_t, m_t = guards[0]
            lobe_peak = float((a_t * np.abs(m_t @ gam) ** 2).max())
            for a_r, m_r in guards[1:]:
                if float((a_r * np.abs(m_r @ gam) ** 2).max()) >= lobe_peak:
                    feasible = 0
                    break
        if (feasible, f_target) > (best[0], best[1]):
            best = (feasible, f_target, alpha)
    return quantize_states(spec, base.shifted(best[2]))


def target_sum_coefficients(spec: SynthesisSpec) -> np.ndarray:
    """Per-cell complex factors multiplying the reflection coefficient in the
    target-direction interference sum."""
    env = spec.wave.environment()
    X, Y = spec.layout.cell_centers()
    e = incident_field_at(spec.wave, env, X, Y)
    d = spec.direction_refl
    return e * np.exp(1j * env.wavenumber * (X * d.u + Y * d.v))


def _target_samples(direction: Direction) -> GridSamples:
    one = np.array([1.0])
    return GridSamples(
        theta_deg=np.degrees(direction.theta) * one,
        phi_deg=np.degrees(direction.phi) * one,
        u=direction.u * one,
        v=direction.v * one,
        cos_theta=np.cos(direction.theta) * one,
        cos_phi=np.cos(direction.phi) * one,
        sin_phi=np.sin(direction.phi) * one,
    )


def pattern_value_at(cfg: PanelConfiguration, wave: IncidentWave,
                     direction: Direction) -> float:
    """Factorized-path pattern value at a single direction."""
    samples = _target_samples(direction)
    pat = pattern_factorized(cfg, wave, samples)
    return float(pat.values[0])


def cost_otpems(source, wave: IncidentWave | None = None,
                direction_refl: Direction | None = None) -> float:
    """Reciprocal of the pattern value at the target direction.

    ``source`` is a PanelConfiguration (evaluated at ``direction_refl``) or a
    plain non-negative number (a precomputed F). A zero pattern value yields
    ``inf`` rather than raising.
    """
    if isinstance(source, PanelConfiguration):
        if wave is None or direction_refl is None:
            raise ValueError("wave and direction_refl are required with a "
                             "panel configuration")
        f = pattern_value_at(source, wave, direction_refl)
    else:
        f = float(source)
    if f < 0:
        raise ValueError("pattern value must be non-negative")
    if f == 0.0:
        return float("inf")
    return 1.0 / f


def ideal_reference_pattern(spec: SynthesisSpec, grid) -> FarFieldPattern:
    """Pattern of a fictitious panel realizing the profile exactly.

    Every cell reflects with unit magnitude and continuous phase equal to the
    compensation profile, which removes the binary-quantization lobe.
    """
    profile = ideal_phase_profile(spec)
    env = spec.wave.environment()
    X, Y = spec.layout.cell_centers()
    e = incident_field_at(spec.wave, env, X, Y)
    b_tm = np.exp(1j * profile.xi) * e
    samples = grid.samples() if not isinstance(grid, GridSamples) else grid
    k = env.wavenumber
    tx = np.exp(1j * k * np.outer(samples.u, spec.layout.cell_x))
    ty = np.exp(1j * k * np.outer(samples.v, spec.layout.cell_y))
    s_tm = np.einsum("np,pq,nq->n", tx, b_tm, ty, optimize=True)
    a = element_factor(spec.wave, spec.layout, samples)
    values = 0.5 * k * k * a * np.abs(s_tm) ** 2
    cfg_like = PanelConfiguration(spec.layout, spec.geometry,
                                  StateMatrix.intact(spec.layout.P, spec.layout.Q),
                                  spec.provider)
    meta = _metadata(cfg_like, spec.wave)
    meta["ideal_reference"] = True
    return FarFieldPattern(grid=grid, values=values, metadata=meta)


EXHAUSTIVE_CELL_LIMIT = 16


def exhaustive_oracle(spec: SynthesisSpec) -> StateMatrix:
    """Brute-force state matrix maximizing the pattern at the target.

    Enumerates all 2^(P*Q) matrices; refused above 16 cells.
    """
    n = spec.layout.P * spec.layout.Q
    if n > EXHAUSTIVE_CELL_LIMIT:
        raise ValueError(
            f"exhaustive search refused for {n} cells (limit "
            f"{EXHAUSTIVE_CELL_LIMIT})")
    g0 = spec.provider.evaluate(spec.geometry, 0, spec.wave).gamma_tm
    g1 = spec.provider.evaluate(spec.geometry, 1, spec.wave).gamma_tm
    c = target_sum_coefficients(spec).ravel()
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    totals = bits @ (g1 * c) + (1 - bits) @ (g0 * c)
    best = int(np.argmax(np.abs(totals) ** 2))
    return StateMatrix(bits[best].reshape(spec.layout.P, spec.layout.Q))


def save_states_csv(states: StateMatrix, stream) -> None:
    """P rows of Q comma-separated {0,1} values, row p=1 first."""
    for row in states.s:
        stream.write(",".join(str(int(v)) for v in row) + "\n")


def load_states_csv(stream) -> StateMatrix:
    rows = []
    for line in stream.read().splitlines():
        if not line.strip():
            continue
        rows.append([int(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError("state-matrix CSV is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("state-matrix CSV rows have inconsistent lengths")
    return StateMatrix(np.array(rows, dtype=int))


def report_to_json(report: SynthesisReport, spec: SynthesisSpec) -> str:
    """Serialize a synthesis report (angles in degrees, arrays row-major)."""
    payload = {
        "states": report.states.s.tolist(),
        "xi_deg": np.degrees(report.ideal_profile.xi).tolist(),
        "realized_deg": np.degrees(report.realized_phases).tolist(),
        "residual_deg": np.degrees(report.residuals).tolist(),
        "cost": report.cost,
        "burn_count": report.burn_count,
        "burn_sequence": report.burn_sequence(),
        "spec": {
            "theta_refl_deg": float(np.degrees(spec.direction_refl.theta)),
            "phi_refl_deg": float(np.degrees(spec.direction_refl.phi)),
            "freq_hz": spec.wave.freq.hz,
            "theta_inc_deg": float(np.degrees(spec.wave.direction.theta)),
            "phi_inc_deg": float(np.degrees(spec.wave.direction.phi)),
            "polarization": spec.wave.polarization,
            "P": spec.layout.P,
            "Q": spec.layout.Q,
            "dx_m": spec.layout.dx,
            "dy_m": spec.layout.dy,
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)
