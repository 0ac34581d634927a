"""Meta-atom design: state-split cost and bounded particle-swarm search.

The cost drives the two fuse states' reflection phases toward an antipodal
split while keeping both magnitudes high; the swarm is a plain global-best
PSO with constriction coefficients, bound clamping (with velocity zeroing on
the clamped coordinate) and a stagnation stop.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .conventions import TE, TM, IncidentWave, wrap_phase
from .reflection import MetaAtomGeometry, OutOfBandError

MAX_ITERATIONS = "max_iterations"
STAGNATION = "stagnation"


def delta_gamma(geometry: MetaAtomGeometry, wave: IncidentWave, provider,
                pol: str = TM) -> float:
    """Absolute wrapped phase split between the two fuse states, in [0, pi]."""
    g0 = provider.evaluate(geometry, 0, wave).component(pol)
    g1 = provider.evaluate(geometry, 1, wave).component(pol)
    return abs(wrap_phase(np.angle(g1) - np.angle(g0)))


@dataclass(frozen=True)
class MadCostConfig:
    """Weights and evaluation context of the meta-atom cost."""

    wave: IncidentWave
    provider: object
    beta1: float = 1.0
    beta2: float = 0.1
    magnitude_floor: float = 1e-6

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0 or self.beta1 + self.beta2 <= 0:
            raise ValueError("beta1, beta2 must be non-negative with a "
                             "positive sum")
        if self.magnitude_floor <= 0:
            raise ValueError("magnitude_floor must be positive")


def cost_mad(geometry: MetaAtomGeometry, cfg: MadCostConfig) -> float:
    """Phase-split misfit plus reciprocal-magnitude penalty over both
    polarizations and both states."""
    phase_term = 0.0
    mag_term = 0.0
    tensors = {s: cfg.provider.evaluate(geometry, s, cfg.wave) for s in (0, 1)}
    for pol in (TE, TM):
        d = abs(wrap_phase(np.angle(tensors[1].component(pol)) -
                           np.angle(tensors[0].component(pol))))
        phase_term += abs(d - np.pi)
        for s in (0, 1):
            mag = abs(tensors[s].component(pol))
            mag_term += 1.0 / max(mag, cfg.magnitude_floor)
    return cfg.beta1 * phase_term + cfg.beta2 * mag_term


@dataclass(frozen=True)
class SwarmConfig:
    """Particle-swarm parameters (constriction defaults)."""

    population: int = 20
    max_iterations: int = 100
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    stagnation_window: int = 30
    stagnation_tol: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.stagnation_window < 1:
            raise ValueError("stagnation_window must be at least 1")


@dataclass(frozen=True)
class SwarmResult:
    """Best point found by the swarm plus its convergence trace."""

    x_opt: np.ndarray
    cost: float
    history: list[float]     # best-so-far after each generation
    termination: str         # MAX_ITERATIONS or STAGNATION
    seed: int


def swarm_minimize(cost, lower, upper, swarm: SwarmConfig) -> SwarmResult:
    """Minimize ``cost`` over a box with a seeded global-best PSO.

    Generation 1 is the uniformly drawn initial population (zero initial
    velocities); each later generation applies the standard velocity/position
    update with per-coordinate uniform draws, clamps positions to the box and
    zeroes the velocity on any clamped coordinate. The returned optimum is
    the best point over every evaluation of every generation.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("bounds must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("bounds must be finite")
    if not np.all(lower < upper):
        raise ValueError("each lower bound must be below its upper bound")

    rng = np.random.default_rng(swarm.rng_seed)
    C, D = swarm.population, lower.size
    x = lower + rng.uniform(size=(C, D)) * (upper - lower)
    v = np.zeros((C, D))
    f = np.array([cost(xi) for xi in x])
    pbest = x.copy()
    pcost = f.copy()
    i_best = int(np.argmin(pcost))
    gbest = pbest[i_best].copy()
    gcost = float(pcost[i_best])
    history = [gcost]
    termination = MAX_ITERATIONS

    for _ in range(1, swarm.max_iterations):
        r1 = rng.uniform(size=(C, D))
        r2 = rng.uniform(size=(C, D))
        v = (swarm.inertia * v
             + swarm.cognitive * r1 * (pbest - x)
             + swarm.social * r2 * (gbest - x))
        x = x + v
        clamped = (x < lower) | (x > upper)
        x = np.clip(x, lower, upper)
        v[clamped] = 0.0
        f = np.array([cost(xi) for xi in x])
        improved = f < pcost
        pbest[improved] = x[improved]
        pcost[improved] = f[improved]
        i_best = int(np.argmin(pcost))
        if pcost[i_best] < gcost:
            gcost = float(pcost[i_best])
            gbest = pbest[i_best].copy()
        history.append(gcost)
        w = swarm.stagnation_window
        if len(history) > w:
            ref = history[-w - 1]
            rel = (ref - history[-1]) / max(abs(ref), 1e-300)
            if rel < swarm.stagnation_tol:
                termination = STAGNATION
                break
    return SwarmResult(x_opt=gbest, cost=gcost, history=history,
                       termination=termination, seed=swarm.rng_seed)


@dataclass(frozen=True)
class MadResult:
    """Optimized geometry with the swarm trace behind it."""

    g_opt: MetaAtomGeometry
    cost: float
    history: list[float]
    termination: str
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "g_opt": {d.name: d.value for d in self.g_opt.descriptors},
            "cost": self.cost,
            "history": self.history,
            "termination": self.termination,
            "seed": self.seed,
        }


def design_meta_atom(cfg: MadCostConfig, swarm: SwarmConfig,
                     template: MetaAtomGeometry) -> MadResult:
    """Swarm-minimize the meta-atom cost over the template's bounds.

    Tied descriptors are single coordinates of the search (the template
    stores them once), expanded on evaluation by construction.
    """
    lower, upper = template.bounds()

    def vec_cost(vec):
        return cost_mad(template.with_values(vec), cfg)

    res = swarm_minimize(vec_cost, lower, upper, swarm)
    return MadResult(g_opt=template.with_values(res.x_opt), cost=res.cost,
                     history=res.history, termination=res.termination,
                     seed=res.seed)


FREQUENCY_RESPONSE_HEADER = ("freq_hz,pol,state,mag_db,phase_deg,"
                             "delta_gamma_deg")


@dataclass(frozen=True)
class FrequencyResponseRow:
    freq_hz: float
    pol: str
    state: int
    mag_db: float
    phase_deg: float
    delta_gamma_deg: float


def frequency_response(geometry: MetaAtomGeometry, provider, band,
                       wave_template: IncidentWave) -> list[FrequencyResponseRow]:
    """Per-frequency magnitudes and state splits of the reflection tensor.

    ``band`` is an iterable of frequencies in hertz; out-of-band entries are
    skipped with a warning. The split column repeats on both state rows of a
    polarization for plotting convenience.
    """
    from dataclasses import replace

    from .conventions import Frequency

    rows: list[FrequencyResponseRow] = []
    for f in band:
        wave = replace(wave_template, freq=Frequency(float(f)))
        try:
            tensors = {s: provider.evaluate(geometry, s, wave) for s in (0, 1)}
        except OutOfBandError as exc:
            warnings.warn(f"skipping {f} Hz: {exc}", stacklevel=2)
            continue
        for pol in (TE, TM):
            split = np.degrees(abs(wrap_phase(
                np.angle(tensors[1].component(pol)) -
                np.angle(tensors[0].component(pol)))))
            for s in (0, 1):
                g = tensors[s].component(pol)
                mag = abs(g)
                mag_db = -np.inf if mag == 0 else 20.0 * np.log10(mag)
                rows.append(FrequencyResponseRow(
                    freq_hz=float(f), pol=pol, state=s,
                    mag_db=float(mag_db),
                    phase_deg=float(np.degrees(np.angle(g))),
                    delta_gamma_deg=float(split)))
    return rows


def frequency_response_csv(rows: list[FrequencyResponseRow], stream) -> None:
    stream.write(FREQUENCY_RESPONSE_HEADER + "\n")
    for r in rows:
        stream.write(",".join([
            format(r.freq_hz, ".10g"), r.pol, str(r.state),
            format(r.mag_db, ".10g"), format(r.phase_deg, ".10g"),
            format(r.delta_gamma_deg, ".10g"),
        ]) + "\n")
