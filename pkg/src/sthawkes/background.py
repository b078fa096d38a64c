"""Tabulated background shape fields and their kernel-density estimators.

The separable background is mu * f_S(x, y) * f_T(t) with both shape factors
stored on regular grids and normalised to mean one over the window, so the
scalar mu keeps its meaning as the average background rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import Window

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_DOMAIN_SLACK = 1e-9
_trapezoid = getattr(np, "trapezoid", np.trapz)


@dataclass(frozen=True)
class TemporalField:
    """Piecewise-linear shape f_T(t) on an increasing node grid."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be a strictly increasing 1-D grid")
        if values.shape != nodes.shape or np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("values must be finite, non-negative and align with nodes")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def value_at(self, t):
        t = np.asarray(t, dtype=float)
        span = self.nodes[-1] - self.nodes[0]
        if np.any(t < self.nodes[0] - _DOMAIN_SLACK * span) or np.any(t > self.nodes[-1] + _DOMAIN_SLACK * span):
            raise ValueError("query outside the tabulated time span")
        return np.interp(t, self.nodes, self.values)

    def mean_value(self) -> float:
        """Average of the interpolant over the node span (trapezoid rule)."""
        return float(_trapezoid(self.values, self.nodes) / (self.nodes[-1] - self.nodes[0]))

    def normalized(self) -> "TemporalField":
        m = self.mean_value()
        if m <= 0:
            raise ValueError("cannot normalise a field with zero mass")
        return TemporalField(self.nodes, self.values / m)

    def sample(self, rng: np.random.Generator, n: int):
        """Draw times from the density proportional to the interpolant.

        Segment chosen by trapezoid mass, then the exact inverse of the
        piecewise-linear cdf inside the segment.
        """
        widths = np.diff(self.nodes)
        v0 = self.values[:-1]
        v1 = self.values[1:]
        masses = 0.5 * (v0 + v1) * widths
        cum = np.cumsum(masses)
        total = cum[-1]
        if total <= 0:
            raise ValueError("cannot sample from a field with zero mass")
        u = rng.uniform(0.0, total, n)
        seg = np.searchsorted(cum, u, side="right")
        seg = np.minimum(seg, len(masses) - 1)
        rem = u - (cum[seg] - masses[seg])
        a = v0[seg]
        slope = (v1[seg] - v0[seg]) / widths[seg]
        # solve a*w + slope*w^2/2 = rem for the offset w inside the segment
        disc = np.maximum(a * a + 2.0 * slope * rem, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(
                np.abs(slope) > 1e-12 * (np.abs(a) + 1.0),
                (np.sqrt(disc) - a) / slope,
                rem / np.maximum(a, 1e-300),
            )
        w = np.clip(w, 0.0, widths[seg])
        return self.nodes[seg] + w


@dataclass(frozen=True)
class SpatialField:
    """Bilinear shape f_S(x, y) on a rectangular node grid."""

    x_nodes: np.ndarray
    y_nodes: np.ndarray
    values: np.ndarray
    bandwidth: float | None = None

    def __post_init__(self) -> None:
        xn = np.asarray(self.x_nodes, dtype=float)
        yn = np.asarray(self.y_nodes, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        for nodes in (xn, yn):
            if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
                raise ValueError("nodes must be strictly increasing 1-D grids")
        if vals.shape != (xn.size, yn.size) or np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite, non-negative and of shape (len(x_nodes), len(y_nodes))")
        object.__setattr__(self, "x_nodes", xn)
        object.__setattr__(self, "y_nodes", yn)
        object.__setattr__(self, "values", vals)

    def value_at(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xn, yn = self.x_nodes, self.y_nodes
        sx = xn[-1] - xn[0]
        sy = yn[-1] - yn[0]
        if (
            np.any(x < xn[0] - _DOMAIN_SLACK * sx)
            or np.any(x > xn[-1] + _DOMAIN_SLACK * sx)
            or np.any(y < yn[0] - _DOMAIN_SLACK * sy)
            or np.any(y > yn[-1] + _DOMAIN_SLACK * sy)
        ):
            raise ValueError("query outside the tabulated spatial domain")
        i = np.clip(np.searchsorted(xn, x, side="right") - 1, 0, xn.size - 2)
        j = np.clip(np.searchsorted(yn, y, side="right") - 1, 0, yn.size - 2)
        fx = np.clip((x - xn[i]) / (xn[i + 1] - xn[i]), 0.0, 1.0)
        fy = np.clip((y - yn[j]) / (yn[j + 1] - yn[j]), 0.0, 1.0)
        v = self.values
        return (
            v[i, j] * (1 - fx) * (1 - fy)
            + v[i + 1, j] * fx * (1 - fy)
            + v[i, j + 1] * (1 - fx) * fy
            + v[i + 1, j + 1] * fx * fy
        )

    def mean_value(self) -> float:
        inner = _trapezoid(self.values, self.y_nodes, axis=1)
        total = _trapezoid(inner, self.x_nodes)
        area = (self.x_nodes[-1] - self.x_nodes[0]) * (self.y_nodes[-1] - self.y_nodes[0])
        return float(total / area)

    def normalized(self) -> "SpatialField":
        m = self.mean_value()
        if m <= 0:
            raise ValueError("cannot normalise a field with zero mass")
        return SpatialField(self.x_nodes, self.y_nodes, self.values / m, self.bandwidth)

    def sample(self, rng: np.random.Generator, n: int):
        """Draw positions cell-wise: a cell by its mass, uniform inside it.

        Piecewise-constant approximation of the bilinear density; adequate at
        the default 128 x 128 resolution.
        """
        cell_vals = 0.25 * (
            self.values[:-1, :-1] + self.values[1:, :-1] + self.values[:-1, 1:] + self.values[1:, 1:]
        )
        wx = np.diff(self.x_nodes)
        wy = np.diff(self.y_nodes)
        masses = (cell_vals * wx[:, None] * wy[None, :]).ravel()
        total = masses.sum()
        if total <= 0:
            raise ValueError("cannot sample from a field with zero mass")
        cum = np.cumsum(masses)
        idx = np.searchsorted(cum, rng.uniform(0.0, total, n), side="right")
        idx = np.minimum(idx, masses.size - 1)
        i, j = np.unravel_index(idx, cell_vals.shape)
        x = self.x_nodes[i] + wx[i] * rng.uniform(size=n)
        y = self.y_nodes[j] + wy[j] * rng.uniform(size=n)
        return x, y


def eval_field(field, *coords):
    """Interpolated field value: linear for TemporalField, bilinear for SpatialField."""
    if isinstance(field, TemporalField):
        (t,) = coords
        return field.value_at(t)
    if isinstance(field, SpatialField):
        x, y = coords
        return field.value_at(x, y)
    raise TypeError(f"not a tabulated field: {type(field).__name__}")


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb, 0.9 min(sd, iqr/1.34) n^(-1/5)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(values.std(ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    if not scale > 0:
        raise ValueError("sample has no dispersion; kernel estimate is degenerate")
    return 0.9 * scale * n ** (-0.2)


def estimate_temporal_background(times, window: Window, grid_size: int = 512, bandwidth: float | None = None) -> TemporalField:
    """Reflected Gaussian KDE of event times, normalised to mean one.

    Reflection at both ends of [t_min, t_max] removes the usual boundary
    dip of the plain kernel estimate.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 5:
        raise ValueError("need at least 5 events to estimate the temporal background")
    if np.any(t < window.t_min) or np.any(t > window.t_max):
        raise ValueError("times must lie inside the window")
    h = bandwidth if bandwidth is not None else silverman_bandwidth(t)
    nodes = np.linspace(window.t_min, window.t_max, grid_size)
    sources = np.concatenate([t, 2.0 * window.t_min - t, 2.0 * window.t_max - t])
    dens = np.zeros(grid_size)
    for a in range(0, sources.size, 4096):
        z = (nodes[:, None] - sources[None, a : a + 4096]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= t.size * h * _SQRT_2PI
    return TemporalField(nodes, dens).normalized()


def _lscv_score(x, y, h, n):
    """Least-squares CV score of a 2-D Gaussian KDE at bandwidth h.

    score(h) = int fhat^2 - (2/n) sum_i fhat_{-i}(x_i), computed from the
    pairwise-distance identity for Gaussian kernels; edge terms ignored for
    selection purposes.
    """
    quad = 0.0  # sum over all pairs of exp(-d^2 / (4 h^2)), includes diagonal
    loo = 0.0  # sum over distinct pairs of exp(-d^2 / (2 h^2))
    for a in range(0, n, 512):
        b = min(a + 512, n)
        d2 = (x[a:b, None] - x[None, :]) ** 2 + (y[a:b, None] - y[None, :]) ** 2
        quad += float(np.exp(-d2 / (4.0 * h * h)).sum())
        e = np.exp(-d2 / (2.0 * h * h))
        loo += float(e.sum()) - (b - a)  # drop the diagonal contribution
    return quad / (4.0 * math.pi * h * h * n * n) - loo / (math.pi * h * h * n * (n - 1))


def lscv_bandwidth(x, y, candidates=None) -> float:
    """Bandwidth minimising the least-squares cross-validation score."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if candidates is None:
        spread = math.sqrt(0.5 * (x.var(ddof=1) + y.var(ddof=1)))
        if not spread > 0:
            raise ValueError("sample has no dispersion; kernel estimate is degenerate")
        reference = spread * n ** (-1.0 / 6.0)
        candidates = reference * np.geomspace(0.25, 4.0, 9)
    scores = [_lscv_score(x, y, float(h), n) for h in candidates]
    return float(candidates[int(np.argmin(scores))])


def estimate_spatial_background(points, window: Window, grid_size: int = 128, bandwidth: float | None = None) -> SpatialField:
    """Edge-corrected 2-D Gaussian KDE of event locations, mean-one normalised.

    The raw kernel sum at each grid location is divided by the mass its
    kernel keeps inside the window (renormalisation edge correction).  The
    bandwidth, when not supplied, comes from least-squares cross-validation
    over a logarithmic candidate grid.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    x, y = pts[:, 0], pts[:, 1]
    if x.size < 5:
        raise ValueError("need at least 5 events to estimate the spatial background")
    if not np.all(window.contains(x, y, np.full(x.size, window.t_min))):
        raise ValueError("points must lie inside the window")
    h = bandwidth if bandwidth is not None else lscv_bandwidth(x, y)
    gx = np.linspace(window.x_min, window.x_max, grid_size)
    gy = np.linspace(window.y_min, window.y_max, grid_size)
    ax = np.exp(-0.5 * ((gx[:, None] - x[None, :]) / h) ** 2)
    ay = np.exp(-0.5 * ((gy[:, None] - y[None, :]) / h) ** 2)
    dens = (ax @ ay.T) / (x.size * 2.0 * math.pi * h * h)
    cx = ndtr((window.x_max - gx) / h) - ndtr((window.x_min - gx) / h)
    cy = ndtr((window.y_max - gy) / h) - ndtr((window.y_min - gy) / h)
    dens /= cx[:, None] * cy[None, :]
    return SpatialField(gx, gy, dens, bandwidth=h).normalized()
