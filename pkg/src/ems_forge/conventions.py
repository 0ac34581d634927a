"""Shared physical constants, coordinate conventions and plane-wave utilities.

Conventions used throughout the package:

* global coordinates centered at the panel barycenter, panel in the z=0 plane;
* time factor exp(+j*omega*t), incident field exp(-j*k_inc.r);
* the incident wavevector points toward the panel from z>0, so
  z_hat . k_inc = -k*cos(theta_inc);
* a "signed cut" angle theta<0 in a phi-cut stands for (|theta|, phi+180deg).

All angles are radians internally; degrees appear only in external files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.constants as _const

C0 = _const.c
EPS0 = _const.epsilon_0
MU0 = _const.mu_0
ETA0 = float(np.sqrt(MU0 / EPS0))  # free-space impedance, 376.7303... ohm

TE = "TE"
TM = "TM"
POLARIZATIONS = (TE, TM)


def wrap_phase(x):
    """Wrap an angle (or array of angles) to the half-open interval (-pi, pi].

    Idempotent; the branch point maps as wrap(-pi) = +pi.

    Raises
    ------
    ValueError
        If any input value is not finite.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("wrap_phase requires finite input")
    r = np.remainder(x, 2.0 * np.pi)  # [0, 2pi)
    r = np.where(r > np.pi, r - 2.0 * np.pi, r)
    if r.ndim == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class Frequency:
    """Operating frequency in hertz (positive)."""

    hz: float

    def __post_init__(self):
        if not (np.isfinite(self.hz) and self.hz > 0):
            raise ValueError(f"frequency must be positive and finite, got {self.hz}")

    @property
    def wavelength(self) -> float:
        return C0 / self.hz

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.hz


@dataclass(frozen=True)
class WaveEnvironment:
    """Free-space propagation constants for one frequency."""

    wavenumber: float  # rad/m
    impedance: float   # ohm
    wavelength: float  # m

    @classmethod
    def for_frequency(cls, freq: Frequency) -> "WaveEnvironment":
        lam = freq.wavelength
        return cls(wavenumber=2.0 * np.pi / lam, impedance=ETA0, wavelength=lam)


@dataclass(frozen=True)
class Direction:
    """Propagation/observation direction in spherical angles (radians).

    Canonical form keeps theta in [0, pi/2] and phi in [0, 2pi); build from a
    signed cut angle with :meth:`from_signed_cut`.
    """

    theta: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise ValueError("direction angles must be finite")
        if self.theta < -1e-12 or self.theta > np.pi / 2 + 1e-9:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")
        object.__setattr__(self, "theta", float(max(self.theta, 0.0)))
        object.__setattr__(self, "phi", float(np.remainder(self.phi, 2.0 * np.pi)))

    @classmethod
    def from_signed_cut(cls, theta: float, phi: float = 0.0) -> "Direction":
        """Map a signed cut angle (theta in [-pi/2, pi/2], fixed plane phi)."""
        if theta < 0.0:
            return cls(-theta, phi + np.pi)
        return cls(theta, phi)

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float = 0.0) -> "Direction":
        return cls.from_signed_cut(np.radians(theta_deg), np.radians(phi_deg))

    @property
    def u(self) -> float:
        return float(np.sin(self.theta) * np.cos(self.phi))

    @property
    def v(self) -> float:
        return float(np.sin(self.theta) * np.sin(self.phi))

    def unit_vector(self) -> np.ndarray:
        return np.array([self.u, self.v, np.cos(self.theta)])


@dataclass(frozen=True)
class IncidentWave:
    """Uniform plane wave illuminating the panel from direction ``direction``."""

    freq: Frequency
    direction: Direction
    polarization: str = TM
    amplitude_e0: float = 1.0   # V/m
    phase0: float = 0.0         # rad

    def __post_init__(self):
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be TE or TM, got {self.polarization!r}")
        if not (np.isfinite(self.amplitude_e0) and self.amplitude_e0 > 0):
            raise ValueError("amplitude_e0 must be positive")

    def environment(self) -> WaveEnvironment:
        return WaveEnvironment.for_frequency(self.freq)

    def tm_unit_transverse(self) -> np.ndarray:
        """x/y projections of the TM field unit vector at the panel plane."""
        th, ph = self.direction.theta, self.direction.phi
        return np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph)])

    def te_unit_transverse(self) -> np.ndarray:
        """x/y projections of the TE field unit vector (normal to the plane of incidence)."""
        ph = self.direction.phi
        return np.array([-np.sin(ph), np.cos(ph)])


def incident_wavevector(wave: IncidentWave, env: WaveEnvironment | None = None) -> np.ndarray:
    """Wavevector of the incident plane wave, rad/m, pointing toward the panel."""
    if env is None:
        env = wave.environment()
    return -env.wavenumber * wave.direction.unit_vector()


def incident_field_at(wave: IncidentWave, env: WaveEnvironment | None = None,
                      x=0.0, y=0.0):
    """Complex scalar field of the incident wave at panel points (x, y, 0).

    Accepts scalars or broadcastable arrays for ``x`` and ``y``; magnitude is
    ``amplitude_e0`` everywhere (plane wave).
    """
    if env is None:
        env = wave.environment()
    kvec = incident_wavevector(wave, env)
    phase = wave.phase0 - (kvec[0] * np.asarray(x) + kvec[1] * np.asarray(y))
    out = wave.amplitude_e0 * np.exp(1j * phase)
    if np.ndim(out) == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class EmsLayout:
    """Regular P x Q panel discretization with spacings dx, dy (meters).

    Cell centers follow x_p = (p - (P+1)/2) dx, y_q = (q - (Q+1)/2) dy for
    1-based indices, so the layout is centered on the panel barycenter.
    """

    P: int
    Q: int
    dx: float
    dy: float

    def __post_init__(self):
        if self.P < 1 or self.Q < 1:
            raise ValueError("P and Q must be positive integers")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("cell spacings must be positive")

    @property
    def cell_x(self) -> np.ndarray:
        return (np.arange(1, self.P + 1) - (self.P + 1) / 2.0) * self.dx

    @property
    def cell_y(self) -> np.ndarray:
        return (np.arange(1, self.Q + 1) - (self.Q + 1) / 2.0) * self.dy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell center coordinates, each shaped (P, Q)."""
        return np.meshgrid(self.cell_x, self.cell_y, indexing="ij")

    @property
    def aperture_area(self) -> float:
        return self.P * self.Q * self.dx * self.dy

    @property
    def layout_id(self) -> str:
        return f"{self.P}x{self.Q}@{self.dx:.6g}x{self.dy:.6g}m"
