"""Local reflection-tensor providers for the fuse-switched meta-atom.

Two providers are shipped:

* :class:`TabulatedProvider` serves samples loaded from a CSV table (for
  externally simulated or digitized data);
* :class:`SurrogateProvider` is a lumped-circuit stand-in for a full-wave
  solver: a grounded dielectric slab in parallel with a patch-grid
  capacitance and, for the intact state, a fuse branch in series with a
  via/feed inductance.

The surrogate's parameterization is declared, not claimed faithful to any
particular fabricated cell; its default calibration places the burnt-state
resonance of the reference geometry at the design frequency so the two fuse
states split by well over 120 degrees there.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .conventions import (C0, EPS0, ETA0, MU0, TE, TM, Direction, Frequency,
                          IncidentWave, wrap_phase)

F0_HZ = 5.5e9  # reference design frequency used by the default geometry

# Reference unit-cell descriptor values (meters): square patch edge (two tied
# descriptors), shorting-pin radius, microstrip feed length, unit-cell spacing
# 0.45 wavelengths at the reference frequency (two tied descriptors).
REFERENCE_PATCH_EDGE = 13.95e-3
REFERENCE_PIN_RADIUS = 0.3e-3
REFERENCE_STRIP_LENGTH = 3.71e-3
REFERENCE_CELL_SPACING = 0.45 * C0 / F0_HZ

# Calibration constant of the patch-grid capacitance: chosen so that the
# reference geometry's slab||grid combination anti-resonates at F0_HZ.
DEFAULT_GRID_CAPACITANCE_SCALE = 8.647


class TableFormatError(ValueError):
    """Malformed reflection-table CSV; message names the offending row."""


class IncompleteTableError(ValueError):
    """A tabulated frequency is missing one of the two fuse states."""


class OutOfBandError(ValueError):
    """Requested frequency outside the provider's declared validity band."""


@dataclass(frozen=True)
class Descriptor:
    """One geometric descriptor: bounded value with unit and multiplicity."""

    name: str
    value: float
    unit: str
    lower: float
    upper: float
    multiplicity: int = 1

    def __post_init__(self):
        if not (self.lower <= self.value <= self.upper):
            raise ValueError(
                f"descriptor {self.name}: value {self.value} outside "
                f"[{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class MetaAtomGeometry:
    """Ordered descriptor vector of the meta-atom.

    Tied descriptors (square patch edge, square cell spacing) are stored once
    with ``multiplicity=2``; optimizers treat each stored descriptor as one
    coordinate.
    """

    descriptors: tuple[Descriptor, ...]

    def __getitem__(self, name: str) -> float:
        for d in self.descriptors:
            if d.name == name:
                return d.value
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.descriptors)

    def values(self) -> np.ndarray:
        return np.array([d.value for d in self.descriptors])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([d.lower for d in self.descriptors])
        hi = np.array([d.upper for d in self.descriptors])
        return lo, hi

    def with_values(self, values) -> "MetaAtomGeometry":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.descriptors),):
            raise ValueError("descriptor vector has wrong length")
        return MetaAtomGeometry(tuple(
            replace(d, value=float(v)) for d, v in zip(self.descriptors, values)))

    @classmethod
    def reference(cls, cell_spacing: float | None = None,
                  bounds_pct: float = 0.25) -> "MetaAtomGeometry":
        """Reference fuse-switched patch cell with symmetric +-pct bounds."""
        spacing = REFERENCE_CELL_SPACING if cell_spacing is None else cell_spacing
        def bnd(v):
            return (1.0 - bounds_pct) * v, (1.0 + bounds_pct) * v
        items = [
            ("patch_edge", REFERENCE_PATCH_EDGE, 2),
            ("pin_radius", REFERENCE_PIN_RADIUS, 1),
            ("strip_length", REFERENCE_STRIP_LENGTH, 1),
            ("cell_spacing", spacing, 2),
        ]
        return cls(tuple(
            Descriptor(name, v, "m", *bnd(v), multiplicity=mult)
            for name, v, mult in items))


@dataclass(frozen=True)
class FuseModel:
    """Electrical model of the expendable component.

    ``broken_branch=None`` treats a burnt fuse as an open circuit; pass a
    ``(resistance, inductance)`` pair to keep a residual series branch
    instead.
    """

    intact_resistance: float = 0.6      # ohm
    intact_inductance: float = 3.0e-9   # henry
    broken_branch: tuple[float, float] | None = None

    def __post_init__(self):
        if self.intact_resistance < 0 or self.intact_inductance < 0:
            raise ValueError("fuse resistance/inductance must be non-negative")

    def branch_impedance(self, omega: float, state: int) -> complex | None:
        """Series impedance of the fuse element, or None for an open branch."""
        if state == 1:
            return self.intact_resistance + 1j * omega * self.intact_inductance
        if self.broken_branch is None:
            return None
        r, l = self.broken_branch
        return r + 1j * omega * l


@dataclass(frozen=True)
class Substrate:
    """Grounded dielectric slab parameters."""

    eps_r: float = 3.66
    tan_delta: float = 4.0e-3
    thickness: float = 5.1e-4  # m

    def __post_init__(self):
        if self.eps_r <= 0 or self.thickness < 0 or self.tan_delta < 0:
            raise ValueError("substrate parameters must be non-negative (eps_r > 0)")


@dataclass(frozen=True)
class ReflectionTensor:
    """2x2 complex local reflection tensor (TE/TM co- and cross-terms)."""

    gamma_te: complex
    gamma_tm: complex
    gamma_te_tm: complex = 0.0 + 0.0j
    gamma_tm_te: complex = 0.0 + 0.0j

    def component(self, pol: str) -> complex:
        if pol == TE:
            return self.gamma_te
        if pol == TM:
            return self.gamma_tm
        raise ValueError(f"unknown polarization {pol!r}")

    def as_matrix(self) -> np.ndarray:
        """Rows map incident (TE, TM) to reflected (TE, TM)."""
        return np.array([[self.gamma_te, self.gamma_te_tm],
                         [self.gamma_tm_te, self.gamma_tm]])

    @property
    def is_diagonal(self) -> bool:
        return self.gamma_te_tm == 0 and self.gamma_tm_te == 0


_COMPONENTS = ("TE", "TETM", "TM", "TMTE")
_COMPONENT_FIELD = {"TE": "gamma_te", "TM": "gamma_tm",
                    "TETM": "gamma_te_tm", "TMTE": "gamma_tm_te"}

NEAREST = "nearest"
LINEAR = "linear"


@dataclass(frozen=True)
class _TableRow:
    freq_hz: float
    state: int
    component: str
    mag: float
    phase_deg: float
    raw: tuple[str, str, str, str, str]  # original cell text, for export


class ReflectionTable:
    """Reflection samples keyed by (frequency, fuse state, tensor component).

    Frequencies are strictly increasing and every tabulated frequency carries
    both fuse states for each component it declares.
    """

    def __init__(self, rows: list[_TableRow], incidence: Direction | None = None,
                 interpolation: str = NEAREST):
        if interpolation not in (NEAREST, LINEAR):
            raise ValueError(f"unknown interpolation mode {interpolation!r}")
        self._rows = list(rows)
        self.incidence = incidence if incidence is not None else Direction(0.0, 0.0)
        self.interpolation = interpolation
        self._index: dict[tuple[float, int, str], complex] = {}
        for r in self._rows:
            key = (r.freq_hz, r.state, r.component)
            self._index[key] = r.mag * np.exp(1j * np.radians(r.phase_deg))
        self.frequencies = sorted({r.freq_hz for r in self._rows})
        self._validate()

    def _validate(self):
        comps = {}
        for r in self._rows:
            comps.setdefault((r.freq_hz, r.component), set()).add(r.state)
        for (f, comp), states in comps.items():
            if states != {0, 1}:
                raise IncompleteTableError(
                    f"component {comp} at {f} Hz is missing state "
                    f"{(1 if 0 in states else 0)}")

    @property
    def band(self) -> tuple[float, float]:
        return self.frequencies[0], self.frequencies[-1]

    def lookup(self, freq_hz: float, state: int, component: str) -> complex:
        lo, hi = self.band
        tol = 1e-9 * max(abs(lo), abs(hi))
        if freq_hz < lo - tol or freq_hz > hi + tol:
            raise OutOfBandError(
                f"frequency {freq_hz} Hz outside table band [{lo}, {hi}] Hz")
        freqs = self.frequencies
        if self.interpolation == NEAREST:
            i = int(np.argmin([abs(f - freq_hz) for f in freqs]))
            return self._index.get((freqs[i], state, component), 0.0 + 0.0j)
        # linear: interpolate real and imaginary parts independently
        i = int(np.searchsorted(freqs, freq_hz))
        if i == 0 or freqs[min(i, len(freqs) - 1)] == freq_hz:
            f = freqs[min(i, len(freqs) - 1)]
            return self._index.get((f, state, component), 0.0 + 0.0j)
        f_lo, f_hi = freqs[i - 1], freqs[i]
        z_lo = self._index.get((f_lo, state, component), 0.0 + 0.0j)
        z_hi = self._index.get((f_hi, state, component), 0.0 + 0.0j)
        t = (freq_hz - f_lo) / (f_hi - f_lo)
        return z_lo + t * (z_hi - z_lo)

    def save(self, stream) -> None:
        """Write the table back out; bit-identical round trip for valid files."""
        stream.write("freq_hz,state,component,mag,phase_deg\n")
        for r in self._rows:
            stream.write(",".join(r.raw) + "\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.save(buf)
        return buf.getvalue()


def load_reflection_table(source, incidence: Direction | None = None,
                          interpolation: str = NEAREST) -> ReflectionTable:
    """Parse a reflection-table CSV stream or string.

    Expected header ``freq_hz,state,component,mag,phase_deg`` with state in
    {0,1}, component in {TE,TM,TETM,TMTE}, linear magnitude, phase in degrees,
    rows sorted by (freq_hz, state, component). Errors name the offending row
    (1-based, counting the header as row 1).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = source.read().splitlines()
    if not lines:
        raise TableFormatError("row 1: empty table stream")
    header = lines[0].strip()
    if header != "freq_hz,state,component,mag,phase_deg":
        raise TableFormatError(f"row 1: unexpected header {header!r}")
    rows: list[_TableRow] = []
    seen = set()
    prev_key = None
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise TableFormatError(f"row {n}: expected 5 columns, got {len(cells)}")
        f_s, s_s, comp, mag_s, ph_s = (c.strip() for c in cells)
        try:
            freq = float(f_s)
            state = int(s_s)
            mag = float(mag_s)
            phase = float(ph_s)
        except ValueError as exc:
            raise TableFormatError(f"row {n}: {exc}") from None
        if state not in (0, 1):
            raise TableFormatError(f"row {n}: state must be 0 or 1, got {s_s}")
        if comp not in _COMPONENTS:
            raise TableFormatError(f"row {n}: unknown component {comp!r}")
        key = (freq, state, comp)
        if key in seen:
            raise TableFormatError(f"row {n}: duplicate key {key}")
        seen.add(key)
        if prev_key is not None and key <= prev_key:
            if freq < prev_key[0]:
                raise TableFormatError(
                    f"row {n}: frequencies must be strictly increasing")
            raise TableFormatError(
                f"row {n}: rows must be sorted by (freq_hz, state, component)")
        prev_key = key
        rows.append(_TableRow(freq, state, comp, mag, phase,
                              raw=(f_s, s_s, comp, mag_s, ph_s)))
    if not rows:
        raise TableFormatError("row 2: table has no data rows")
    return ReflectionTable(rows, incidence=incidence, interpolation=interpolation)


class TabulatedProvider:
    """Reflection provider backed by a loaded :class:`ReflectionTable`.

    The table is tagged with one incidence direction; queries at other
    incidences reuse it and emit a warning.
    """

    def __init__(self, table: ReflectionTable):
        self.table = table

    @property
    def band(self) -> tuple[float, float]:
        return self.table.band

    def evaluate(self, geometry: MetaAtomGeometry | None, state: int,
                 wave: IncidentWave) -> ReflectionTensor:
        d = wave.direction
        ref = self.table.incidence
        theta_differs = abs(d.theta - ref.theta) > 1e-9
        phi_differs = abs(wrap_phase(d.phi - ref.phi)) > 1e-9 and d.theta > 1e-12
        if theta_differs or phi_differs:
            warnings.warn(
                "reflection table tabulated for a different incidence; "
                "reusing its entries", stacklevel=2)
        f = wave.freq.hz
        vals = {c: self.table.lookup(f, int(state), c) for c in _COMPONENTS}
        return ReflectionTensor(
            gamma_te=vals["TE"], gamma_tm=vals["TM"],
            gamma_te_tm=vals["TETM"], gamma_tm_te=vals["TMTE"])


def two_state_table(gamma_intact: complex, gamma_burnt: complex,
                    freq_hz: float = F0_HZ,
                    components=(TE, TM)) -> TabulatedProvider:
    """Convenience provider with one frequency and explicit state tensors."""
    rows = []
    for state, g in ((0, gamma_burnt), (1, gamma_intact)):
        for comp in components:
            rows.append(f"{freq_hz},{state},{comp},{abs(g)},"
                        f"{np.degrees(np.angle(g))}")
    order = sorted(rows, key=lambda r: (float(r.split(',')[0]),
                                        int(r.split(',')[1]), r.split(',')[2]))
    csv = "freq_hz,state,component,mag,phase_deg\n" + "\n".join(order) + "\n"
    return TabulatedProvider(load_reflection_table(csv))


class SurrogateProvider:
    """Lumped-circuit reflection surrogate with fuse parasitics.

    The cell's surface impedance is the parallel combination of

    (a) the short-circuited grounded-slab line impedance
        ``j eta_d tan(k_d t)``,
    (b) a patch-grid capacitance set by patch edge and cell spacing
        (scaled by the calibration constant), and
    (c) for an intact fuse, the fuse branch R + j w L in series with a
        via/feed inductance set by pin radius and microstrip length; a burnt
        fuse follows the FuseModel's broken branch (open by default).

    Each polarization reflects with ``(Z_s - eta0)/(Z_s + eta0)``; cross
    terms are zero. The response depends on frequency only (the broadside
    design is reused at oblique incidence, as in practice).
    """

    def __init__(self, substrate: Substrate | None = None,
                 fuse: FuseModel | None = None,
                 grid_capacitance_scale: float = DEFAULT_GRID_CAPACITANCE_SCALE,
                 band: tuple[float, float] = (1.0e9, 12.0e9)):
        self.substrate = substrate if substrate is not None else Substrate()
        self.fuse = fuse if fuse is not None else FuseModel()
        self.grid_capacitance_scale = grid_capacitance_scale
        self.band = band
        if self.substrate.thickness <= 0:
            raise ValueError("degenerate substrate: thickness must be positive")

    def _slab_impedance(self, omega: float) -> complex:
        eps_c = self.substrate.eps_r * (1.0 - 1j * self.substrate.tan_delta)
        n = np.sqrt(eps_c)
        k_d = (omega / C0) * n
        eta_d = ETA0 / n
        return 1j * eta_d * np.tan(k_d * self.substrate.thickness)

    def _grid_capacitance(self, omega: float, edge: float, spacing: float) -> complex:
        gap = spacing - edge
        if gap <= 0:
            raise ValueError("patch edge must be smaller than the cell spacing")
        eps_eff = (self.substrate.eps_r + 1.0) / 2.0
        c = (2.0 * spacing * EPS0 * eps_eff / np.pi
             * np.log(1.0 / np.sin(np.pi * gap / (2.0 * spacing))))
        return self.grid_capacitance_scale * c

    def _pin_inductance(self, pin_radius: float, strip_length: float) -> float:
        if pin_radius <= 0 or strip_length <= 0:
            raise ValueError("pin radius and strip length must be positive")
        ratio = 2.0 * strip_length / pin_radius
        if ratio <= np.e:
            # degenerate fat-pin limit: keep the branch weakly inductive
            return MU0 / (2.0 * np.pi) * strip_length * 1e-3
        return MU0 / (2.0 * np.pi) * strip_length * (np.log(ratio) - 1.0)

    def surface_impedance(self, geometry: MetaAtomGeometry, state: int,
                          freq_hz: float) -> complex:
        # the cell is square-symmetric (tied descriptors), so one impedance
        # serves both polarizations
        omega = 2.0 * np.pi * freq_hz
        edge = geometry["patch_edge"]
        spacing = geometry["cell_spacing"]
        y = 1.0 / self._slab_impedance(omega)
        c_grid = self._grid_capacitance(omega, edge, spacing)
        y += 1j * omega * c_grid
        z_fuse = self.fuse.branch_impedance(omega, int(state))
        if z_fuse is not None:
            l_pin = self._pin_inductance(geometry["pin_radius"],
                                         geometry["strip_length"])
            y += 1.0 / (z_fuse + 1j * omega * l_pin)
        return 1.0 / y

    def evaluate(self, geometry: MetaAtomGeometry, state: int,
                 wave: IncidentWave) -> ReflectionTensor:
        f = wave.freq.hz
        lo, hi = self.band
        if f < lo or f > hi:
            raise OutOfBandError(
                f"frequency {f} Hz outside surrogate band [{lo}, {hi}] Hz")
        z = self.surface_impedance(geometry, state, f)
        gamma = (z - ETA0) / (z + ETA0)
        return ReflectionTensor(gamma_te=gamma, gamma_tm=gamma)
