"""Core types for spatio-temporal self-exciting point processes.

The conditional intensity of the model is

    lambda(x, y, t | H_t) = mu(x, y, t) + k * sum_{i: t_i < t} g_T(t - t_i) * g_S(x - x_i, y - y_i)

with background rate mu, reproduction number k (the expected number of
direct offspring per event; k < 1 keeps the process subcritical) and
triggering densities g_T on [0, inf) and g_S on R^2, each normalised to
total mass one so that k alone carries the excitation strength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import betainc

if TYPE_CHECKING:
    from .background import SpatialField, TemporalField

TEMPORAL_KINDS = ("exponential", "powerlaw")
SPATIAL_KINDS = ("gaussian", "exponential")

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Window:
    """Axis-aligned study region [x_min, x_max] x [y_min, y_max] x [t_min, t_max]."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    t_min: float
    t_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("spatial bounds must satisfy min < max")
        if self.t_min < 0 or not self.t_min < self.t_max:
            raise ValueError("time bounds must satisfy 0 <= t_min < t_max")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def duration(self) -> float:
        return self.t_max - self.t_min

    @property
    def volume(self) -> float:
        return self.area * self.duration

    def contains(self, x, y, t):
        """Vectorised inclusive membership test."""
        x, y, t = np.asarray(x), np.asarray(y), np.asarray(t)
        return (
            (x >= self.x_min)
            & (x <= self.x_max)
            & (y >= self.y_min)
            & (y <= self.y_max)
            & (t >= self.t_min)
            & (t <= self.t_max)
        )


@dataclass(frozen=True)
class Event:
    x: float
    y: float
    t: float


@dataclass(frozen=True)
class EventSequence:
    """Events sorted by time.

    ``parents`` optionally records the cluster structure produced by the
    branching simulator: parents[i] is the index of the event that triggered
    event i, or -1 for a background event.  ``generations`` holds the
    corresponding cluster depth (0 for background events).
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    parents: np.ndarray | None = None
    generations: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("x", "y", "t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.x.ndim != 1 or self.x.shape != self.y.shape or self.x.shape != self.t.shape:
            raise ValueError("coordinate arrays must be one-dimensional and equally long")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.t))):
            raise ValueError("coordinates must be finite")
        if self.t.size > 1 and np.any(np.diff(self.t) < 0):
            raise ValueError("events must be sorted by time")
        for name in ("parents", "generations"):
            lab = getattr(self, name)
            if lab is None:
                continue
            lab = np.asarray(lab, dtype=int)
            if lab.shape != self.t.shape:
                raise ValueError(f"{name} must align with the coordinate arrays")
            object.__setattr__(self, name, lab)
        if self.parents is not None:
            idx = np.arange(len(self.parents))
            if np.any(self.parents < -1) or np.any(self.parents >= idx):
                raise ValueError("parent labels must point to earlier events or be -1")

    def __len__(self) -> int:
        return self.t.size

    def event(self, i: int) -> Event:
        return Event(float(self.x[i]), float(self.y[i]), float(self.t[i]))

    @classmethod
    def from_unsorted(cls, x, y, t, parents=None, generations=None) -> "EventSequence":
        """Build a sequence from unsorted arrays, remapping parent labels."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        order = np.argsort(t, kind="stable")
        if parents is not None:
            parents = np.asarray(parents, dtype=int)
            inverse = np.empty(len(order), dtype=int)
            inverse[order] = np.arange(len(order))
            parents = np.where(parents >= 0, inverse[parents], -1)[order]
        if generations is not None:
            generations = np.asarray(generations, dtype=int)[order]
        return cls(x[order], y[order], t[order], parents, generations)


@dataclass(frozen=True)
class TemporalTrigger:
    """Normalised waiting-time density g_T of the triggering function.

    kind "exponential": g_T(dt) = a * exp(-a * dt)          (param a > 0)
    kind "powerlaw":    g_T(dt) = (c - 1) * (1 + dt)^(-c)   (param c > 1)
    """

    kind: str
    param: float

    def __post_init__(self) -> None:
        if self.kind not in TEMPORAL_KINDS:
            raise ValueError(f"unknown temporal trigger kind: {self.kind!r}")
        if not (math.isfinite(self.param) and self.param > 0):
            raise ValueError("trigger parameter must be positive")
        if self.kind == "powerlaw" and not self.param > 1:
            raise ValueError("powerlaw exponent must exceed 1")

    def density(self, dt):
        dt = np.asarray(dt, dtype=float)
        if np.any(dt < 0):
            raise ValueError("time lag must be non-negative")
        if self.kind == "exponential":
            return self.param * np.exp(-self.param * dt)
        return (self.param - 1.0) * np.power(1.0 + dt, -self.param)

    def cdf(self, dt):
        """Triggering mass within lag dt of the source event."""
        dt = np.asarray(dt, dtype=float)
        if np.any(dt < 0):
            raise ValueError("time lag must be non-negative")
        if self.kind == "exponential":
            return -np.expm1(-self.param * dt)
        return 1.0 - np.power(1.0 + dt, 1.0 - self.param)

    def sample(self, rng: np.random.Generator, size: int):
        """Waiting times by inversion of the cdf."""
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.param, size)
        u = rng.uniform(size=size)
        return np.power(u, 1.0 / (1.0 - self.param)) - 1.0


@dataclass(frozen=True)
class SpatialTrigger:
    """Isotropic displacement density g_S of the triggering function.

    kind "gaussian":    g_S(dx, dy) = exp(-(dx^2 + dy^2) / (2 s^2)) / (2 pi s^2)
    kind "exponential": g_S(dx, dy) = exp(-r / b) / (2 pi b^2),  r = sqrt(dx^2 + dy^2)
    """

    kind: str
    param: float

    def __post_init__(self) -> None:
        if self.kind not in SPATIAL_KINDS:
            raise ValueError(f"unknown spatial trigger kind: {self.kind!r}")
        if not (math.isfinite(self.param) and self.param > 0):
            raise ValueError("trigger parameter must be positive")

    @property
    def peak(self) -> float:
        """Density at zero displacement, 1 / (2 pi scale^2)."""
        return 1.0 / (_TWO_PI * self.param * self.param)

    def density(self, dx, dy):
        dx = np.asarray(dx, dtype=float)
        dy = np.asarray(dy, dtype=float)
        return self.density_sq(dx * dx + dy * dy)

    def density_sq(self, r2):
        """Density from squared distances (saves a sqrt in the Gaussian case)."""
        r2 = np.asarray(r2, dtype=float)
        p = self.param
        if self.kind == "gaussian":
            return np.exp(-r2 / (2.0 * p * p)) / (_TWO_PI * p * p)
        return np.exp(-np.sqrt(r2) / p) / (_TWO_PI * p * p)

    def radial_cdf(self, r):
        """Triggering mass of the disc of radius r around the source event.

        Gaussian: 1 - exp(-r^2 / (2 s^2)).  Exponential: the radial profile
        r * exp(-r/b) / b^2 is a Gamma(2, b) density, so the mass is
        1 - (1 + r/b) * exp(-r/b).
        """
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be non-negative")
        p = self.param
        if self.kind == "gaussian":
            return -np.expm1(-r * r / (2.0 * p * p))
        with np.errstate(invalid="ignore"):
            z = r / p
            out = -np.expm1(-z) - z * np.exp(-z)
        return np.where(np.isinf(r), 1.0, out)

    def sample_offsets(self, rng: np.random.Generator, size: int):
        """Displacements (dx, dy) distributed as g_S."""
        if self.kind == "gaussian":
            return rng.normal(0.0, self.param, size), rng.normal(0.0, self.param, size)
        radius = rng.gamma(2.0, self.param, size)
        angle = rng.uniform(0.0, _TWO_PI, size)
        return radius * np.cos(angle), radius * np.sin(angle)


@dataclass(frozen=True)
class ConstantBackground:
    """Homogeneous background rate mu."""

    mu: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError("background rate must be positive")

    def rate(self, x, y, t):
        shape = np.broadcast(np.asarray(x), np.asarray(y), np.asarray(t)).shape
        return np.full(shape, self.mu)

    def total_mass(self, window: Window) -> float:
        return self.mu * window.volume

    def sample(self, rng: np.random.Generator, n: int, window: Window):
        x = rng.uniform(window.x_min, window.x_max, n)
        y = rng.uniform(window.y_min, window.y_max, n)
        t = rng.uniform(window.t_min, window.t_max, n)
        return x, y, t


@dataclass(frozen=True)
class SeparableBackground:
    """mu times mean-one tabulated shape fields: mu * f_S(x, y) * f_T(t).

    Because both fields average to one over the window, mu keeps its meaning
    as the average background rate and the total mass stays mu * |W|.
    """

    mu: float
    spatial_field: "SpatialField"
    temporal_field: "TemporalField"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError("background rate must be positive")

    def rate(self, x, y, t):
        return self.mu * self.spatial_field.value_at(x, y) * self.temporal_field.value_at(t)

    def total_mass(self, window: Window) -> float:
        return self.mu * window.volume

    def sample(self, rng: np.random.Generator, n: int, window: Window):
        x, y = self.spatial_field.sample(rng, n)
        t = self.temporal_field.sample(rng, n)
        return x, y, t


@dataclass(frozen=True)
class GmmBetaBackground:
    """Parametric inhomogeneous background for the extended study case.

    Spatial factor: Gaussian mixture with diagonal covariances, evaluated as
    a plain planar density.  Temporal factor: Beta(a, b) profile rescaled
    from [t_start, t_end], which averages to one over that span.
    """

    mu: float
    means: tuple
    variances: tuple
    weights: tuple
    t_start: float
    t_end: float
    beta_a: float = 1.0
    beta_b: float = 2.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError("background rate must be positive")
        if not (len(self.means) == len(self.variances) == len(self.weights) > 0):
            raise ValueError("mixture components must align")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to one")
        if not self.t_start < self.t_end:
            raise ValueError("temporal profile span must be non-empty")

    def _spatial_density(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (mx, my), (vx, vy), w in zip(self.means, self.variances, self.weights):
            out = out + w * np.exp(-0.5 * ((x - mx) ** 2 / vx + (y - my) ** 2 / vy)) / (
                _TWO_PI * math.sqrt(vx * vy)
            )
        return out

    def _temporal_profile(self, t):
        t = np.asarray(t, dtype=float)
        u = (t - self.t_start) / (self.t_end - self.t_start)
        u = np.clip(u, 0.0, 1.0)
        a, b = self.beta_a, self.beta_b
        norm = math.gamma(a) * math.gamma(b) / math.gamma(a + b)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.power(u, a - 1.0) * np.power(1.0 - u, b - 1.0) / norm
        return np.where(np.isfinite(dens), dens, 0.0)

    def rate(self, x, y, t):
        return self.mu * self._spatial_density(x, y) * self._temporal_profile(t)

    def _spatial_mass(self, window: Window) -> float:
        """Exact mixture mass inside the spatial box."""

        def phi(z):
            return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

        mass = 0.0
        for (mx, my), (vx, vy), w in zip(self.means, self.variances, self.weights):
            sx, sy = math.sqrt(vx), math.sqrt(vy)
            px = phi((window.x_max - mx) / sx) - phi((window.x_min - mx) / sx)
            py = phi((window.y_max - my) / sy) - phi((window.y_min - my) / sy)
            mass += w * px * py
        return mass

    def total_mass(self, window: Window) -> float:
        span = self.t_end - self.t_start
        u1 = min(max((window.t_min - self.t_start) / span, 0.0), 1.0)
        u2 = min(max((window.t_max - self.t_start) / span, 0.0), 1.0)
        temporal = span * (betainc(self.beta_a, self.beta_b, u2) - betainc(self.beta_a, self.beta_b, u1))
        return self.mu * temporal * self._spatial_mass(window)

    def sample(self, rng: np.random.Generator, n: int, window: Window):
        x = np.empty(n)
        y = np.empty(n)
        t = np.empty(n)
        filled = 0
        rounds = 0
        means = np.asarray(self.means, dtype=float)
        sds = np.sqrt(np.asarray(self.variances, dtype=float))
        while filled < n:
            m = n - filled
            comp = rng.choice(len(self.weights), size=m, p=np.asarray(self.weights))
            cx = rng.normal(means[comp, 0], sds[comp, 0])
            cy = rng.normal(means[comp, 1], sds[comp, 1])
            ct = self.t_start + (self.t_end - self.t_start) * rng.beta(self.beta_a, self.beta_b, m)
            ok = window.contains(cx, cy, ct)
            kept = int(ok.sum())
            x[filled : filled + kept] = cx[ok]
            y[filled : filled + kept] = cy[ok]
            t[filled : filled + kept] = ct[ok]
            filled += kept
            rounds += 1
            if rounds > 1000:
                raise RuntimeError("background sampling failed to land inside the window")
        return x, y, t


@dataclass(frozen=True)
class HawkesModel:
    """Background plus triggering: the full generative specification."""

    background: object
    k: float
    temporal: TemporalTrigger
    spatial: SpatialTrigger

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k) and 0.0 <= self.k < 1.0):
            raise ValueError("reproduction number k must lie in [0, 1) for a subcritical process")


@dataclass(frozen=True)
class ParameterVector:
    """The four free parameters of a fit: background rate, reproduction
    number and the temporal/spatial trigger scales."""

    mu: float
    k: float
    temporal_param: float
    spatial_param: float

    def __post_init__(self) -> None:
        vals = (self.mu, self.k, self.temporal_param, self.spatial_param)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("parameters must be finite")
        if self.mu <= 0 or self.temporal_param <= 0 or self.spatial_param <= 0:
            raise ValueError("mu and trigger parameters must be positive")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        # k < 1 is deliberately not enforced: fitters may pass through
        # supercritical values on the way to the optimum.

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.k, self.temporal_param, self.spatial_param])

    @classmethod
    def from_array(cls, arr) -> "ParameterVector":
        mu, k, tp, sp = (float(v) for v in arr)
        return cls(mu, k, tp, sp)


@dataclass
class FitResult:
    """Outcome of a fitting run, shared by all fitters."""

    estimate: ParameterVector
    objective: float
    evaluations: int
    iterations: int
    converged: bool
    seconds: float
    trace: list | None = None
    notes: tuple = ()


def make_triggers(temporal_kind: str, spatial_kind: str, params: ParameterVector):
    """Trigger pair for a parameter vector and a choice of kinds."""
    return (
        TemporalTrigger(temporal_kind, params.temporal_param),
        SpatialTrigger(spatial_kind, params.spatial_param),
    )


def conditional_intensity(model: HawkesModel, history: EventSequence, x: float, y: float, t: float) -> float:
    """Evaluate lambda(x, y, t | H_t) against the events of `history` strictly before t."""
    bg = float(np.asarray(model.background.rate(x, y, t)))
    past = history.t < t
    if model.k == 0.0 or not np.any(past):
        return bg
    gt = model.temporal.density(t - history.t[past])
    gs = model.spatial.density(x - history.x[past], y - history.y[past])
    return bg + model.k * float(np.sum(gt * gs))


def temporal_horizon(temporal: TemporalTrigger, k: float, spatial_peak: float, n: int) -> float:
    """Lag beyond which exponential-trigger contributions are numerically zero.

    Bounds the summed contribution of n events at the spatial peak by 1e-16,
    so truncating the history at this lag changes intensities far below any
    tolerance used here.  Power-law tails are too heavy to truncate.
    """
    if temporal.kind != "exponential" or k <= 0:
        return math.inf
    bound = max(k * temporal.param * spatial_peak * max(n, 1), 1.0)
    return (math.log(bound) + 37.0) / temporal.param


def intensity_at_events(
    data: EventSequence,
    k: float,
    temporal: TemporalTrigger,
    spatial: SpatialTrigger,
    background_rates,
    block_size: int = 512,
) -> np.ndarray:
    """Conditional intensity at every event of `data` given the earlier events.

    `background_rates` is mu(x_i, y_i, t_i) per event; scalars broadcast.
    Works in row blocks so memory stays O(block_size * n).
    """
    n = len(data)
    lam = np.ones(n) * background_rates
    if n == 0 or k == 0.0:
        return lam
    t, x, y = data.t, data.x, data.y
    horizon = temporal_horizon(temporal, k, spatial.peak, n)
    for a in range(0, n, block_size):
        b = min(a + block_size, n)
        lo = 0 if math.isinf(horizon) else int(np.searchsorted(t, t[a] - horizon, side="left"))
        dt = t[a:b, None] - t[None, lo:b]
        mask = dt > 0
        g = temporal.density(np.where(mask, dt, 0.0))
        dx = x[a:b, None] - x[None, lo:b]
        dy = y[a:b, None] - y[None, lo:b]
        g *= spatial.density_sq(dx * dx + dy * dy)
        g[~mask] = 0.0
        lam[a:b] += k * g.sum(axis=1)
    return lam
