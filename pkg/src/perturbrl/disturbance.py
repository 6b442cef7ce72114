"""Seeded disturbance waveforms and the three injection sites.

A :class:`DisturbanceSpec` fully determines the injected signal given a step
index and (for the noise kinds) an RNG stream. Deterministic kinds are pure
functions of the step index; noise kinds consume draws only from the stream
passed in, so distinct channels with distinct streams never interact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError


class Site(str, enum.Enum):
    OBSERVATION = "observation"
    ACTION = "action"
    DYNAMICS = "dynamics"


class Kind(str, enum.Enum):
    NONE = "none"
    WHITE_NOISE = "white_noise"
    UNIFORM_NOISE = "uniform_noise"
    STEP = "step"
    IMPULSE = "impulse"
    SAWTOOTH = "sawtooth"
    TRIANGLE = "triangle"


_NOISE_KINDS = (Kind.WHITE_NOISE, Kind.UNIFORM_NOISE)


def default_direction(site: Site, dim: int) -> np.ndarray:
    """Unit direction used when a spec does not pin one.

    Dynamics disturbances default to a horizontal tap; multi-dimensional
    observation sites spread the waveform evenly over all components
    (normalized to unit length).
    """
    if dim == 1:
        return np.ones(1)
    if site is Site.DYNAMICS:
        d = np.zeros(dim)
        d[0] = 1.0
        return d
    return np.full(dim, 1.0 / math.sqrt(dim))


@dataclass(frozen=True)
class DisturbanceSpec:
    site: Site = Site.DYNAMICS
    kind: Kind = Kind.NONE
    level: float = 0.0
    dim: int = 1
    onset_step: int = 2       # "two steps into the episode"
    width_steps: int = 2      # impulse only
    period_steps: int = 50    # sawtooth/triangle; one cycle per second at 50 Hz
    direction: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.level < 0.0:
            raise ConfigError("disturbance level must be >= 0")
        if self.dim < 1:
            raise ConfigError("disturbance dim must be >= 1")
        if self.onset_step < 0:
            raise ConfigError("onset_step must be >= 0")
        if self.width_steps < 1:
            raise ConfigError("width_steps must be >= 1")
        if self.period_steps < 2:
            raise ConfigError("period_steps must be >= 2")
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=float)
            if d.shape != (self.dim,):
                raise ConfigError("direction dimensionality does not match site dim")
            if abs(np.linalg.norm(d) - 1.0) > 1e-9:
                raise ConfigError("direction must be a unit vector")
            object.__setattr__(self, "direction", d)

    def resolved_direction(self) -> np.ndarray:
        if self.direction is not None:
            return self.direction
        return default_direction(self.site, self.dim)

    def is_active(self) -> bool:
        return self.kind is not Kind.NONE and self.level > 0.0


def none_spec(site: Site = Site.DYNAMICS, dim: int = 1) -> DisturbanceSpec:
    return DisturbanceSpec(site=site, kind=Kind.NONE, dim=dim)


def sample(spec: DisturbanceSpec, step_index: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Disturbance vector at one control step.

    Deterministic kinds need no RNG; noise kinds require one.
    """
    if step_index < 0:
        raise ConfigError("step_index must be >= 0")
    if spec.kind is Kind.NONE:
        return np.zeros(spec.dim)
    if spec.kind in _NOISE_KINDS:
        if rng is None:
            raise ConfigError(f"{spec.kind.value} requires an rng stream")
        if spec.kind is Kind.WHITE_NOISE:
            return spec.level * rng.standard_normal(spec.dim)
        return rng.uniform(-spec.level, spec.level, spec.dim)

    direction = spec.resolved_direction()
    i = step_index - spec.onset_step
    if i < 0:
        return np.zeros(spec.dim)
    if spec.kind is Kind.STEP:
        scale = 1.0
    elif spec.kind is Kind.IMPULSE:
        scale = 1.0 if i < spec.width_steps else 0.0
    elif spec.kind is Kind.SAWTOOTH:
        scale = (i % spec.period_steps) / spec.period_steps
    elif spec.kind is Kind.TRIANGLE:
        k = i % spec.period_steps
        k = min(k, spec.period_steps - k)
        scale = 2.0 * k / spec.period_steps
    else:  # pragma: no cover
        raise ConfigError(f"unknown disturbance kind {spec.kind}")
    return spec.level * scale * direction


def apply(site: Site, nominal: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Compose a disturbance with the nominal signal at its site.

    Observation and action disturbances are additive; a dynamics disturbance
    is simply the external force handed to the simulator.
    """
    nominal = np.asarray(nominal, dtype=float)
    d = np.asarray(d, dtype=float)
    if site is Site.DYNAMICS:
        return d
    if nominal.shape != d.shape:
        raise ConfigError(f"shape mismatch at {site.value} site: {nominal.shape} vs {d.shape}")
    return nominal + d


@dataclass(frozen=True)
class ParamRandomizationSpec:
    """Closed uniform intervals per physical parameter name."""
    intervals: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        for name, lo, hi in self.intervals:
            if not lo > 0.0:
                raise ConfigError(f"{name}: interval lower bound must be > 0")
            if lo > hi:
                raise ConfigError(f"{name}: interval lower bound exceeds upper bound")


def sample_params(spec: ParamRandomizationSpec, rng: np.random.Generator) -> dict[str, float]:
    """Independent uniform draw of each randomized parameter."""
    return {name: float(rng.uniform(lo, hi)) for name, lo, hi in spec.intervals}


# Cart-pole randomization ranges for the domain-randomization ablation.
DR_CARTPOLE = {
    "default": ParamRandomizationSpec((
        ("pole_length", 0.5, 0.5), ("pole_mass", 0.1, 0.1), ("cart_mass", 1.0, 1.0))),
    "low": ParamRandomizationSpec((
        ("pole_length", 0.3, 0.7), ("pole_mass", 0.05, 0.2), ("cart_mass", 0.7, 1.3))),
    "mid": ParamRandomizationSpec((
        ("pole_length", 0.1, 1.0), ("pole_mass", 0.01, 0.5), ("cart_mass", 0.1, 2.0))),
    "high": ParamRandomizationSpec((
        ("pole_length", 0.1, 3.0), ("pole_mass", 0.01, 2.0), ("cart_mass", 0.1, 4.0))),
}


# Quadrotor ranges: the tunable parameters are the drone mass and pitch
# inertia; spans mirror the cart-pole low/mid/high spreads.
DR_QUADROTOR = {
    "default": ParamRandomizationSpec((
        ("mass", 0.027, 0.027), ("inertia_yy", 1.4e-5, 1.4e-5))),
    "low": ParamRandomizationSpec((
        ("mass", 0.019, 0.035), ("inertia_yy", 1.0e-5, 1.8e-5))),
    "mid": ParamRandomizationSpec((
        ("mass", 0.010, 0.054), ("inertia_yy", 0.5e-5, 2.8e-5))),
    "high": ParamRandomizationSpec((
        ("mass", 0.005, 0.108), ("inertia_yy", 0.25e-5, 5.6e-5))),
}


def with_level(spec: DisturbanceSpec, level: float) -> DisturbanceSpec:
    return replace(spec, level=level)
