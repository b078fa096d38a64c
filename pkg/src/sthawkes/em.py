"""EM fitting through the latent branching structure.

Each event is attributed to the background or to an earlier event:

    p_ii = mu(s_i, t_i) / lambda(s_i, t_i | H)
    p_ij = k * g_T(t_i - t_j) * g_S(s_i - s_j) / lambda(s_i, t_i | H),  j < i

The M-step maximises the expected complete-data log-likelihood, whose
integrated triggering mass is taken as k per event (the full-space value of
the triggering integral; edge effects bias k very slightly downward).
Under that approximation every update has a closed form:

    mu    = sum_i p_ii / |W|
    k     = sum_{i>j} p_ij / n
    alpha = sum p_ij / sum p_ij (t_i - t_j)             exponential lags
    gamma = 1 + sum p_ij / sum p_ij log(1 + t_i - t_j)  power-law lags
    sigma = sqrt(sum p_ij r_ij^2 / (2 sum p_ij))        Gaussian displacements
    beta  = sum p_ij r_ij / (2 sum p_ij)                exponential displacements
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .likelihood import default_initial
from .model import (
    EventSequence,
    FitResult,
    ParameterVector,
    SeparableBackground,
    Window,
    intensity_at_events,
    make_triggers,
    temporal_horizon,
)

_BLOCK = 512


@dataclass(frozen=True)
class BranchingProbabilities:
    """Row-stochastic attribution matrix: p[i, j] for j < i is the probability
    that event j triggered event i, p[i, i] that i is a background event."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("probability matrix must be square")
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        return self.p.shape[0]

    @property
    def row_sums(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def background_mass(self) -> float:
        return float(np.trace(self.p))

    @property
    def triggered_mass(self) -> float:
        return float(self.p.sum() - np.trace(self.p))


@dataclass(frozen=True)
class EmConfig:
    initial: ParameterVector | None = None
    max_iters: int = 200
    tol: float = 1e-6
    metric: str = "params"  # "params" | "intensity"

    def __post_init__(self) -> None:
        if self.metric not in ("params", "intensity"):
            raise ValueError(f"unknown convergence metric: {self.metric!r}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def _background_weights(data: EventSequence, background_shape: SeparableBackground | None) -> np.ndarray:
    if background_shape is None:
        return np.ones(len(data))
    return np.asarray(
        background_shape.spatial_field.value_at(data.x, data.y)
        * background_shape.temporal_field.value_at(data.t),
        dtype=float,
    )


def _trigger_rows(k, temporal, spatial, data, a, b, lo):
    """k * g for events a..b (rows) against candidate parents lo..b (columns).

    Returns the trigger block plus the clipped lag and squared-distance
    blocks needed by the M-step sums.  Entries that are not strictly earlier
    in time are zeroed.
    """
    dt = data.t[a:b, None] - data.t[None, lo:b]
    mask = dt > 0
    dt = np.where(mask, dt, 0.0)
    g = k * temporal.density(dt)
    dx = data.x[a:b, None] - data.x[None, lo:b]
    dy = data.y[a:b, None] - data.y[None, lo:b]
    r2 = dx * dx + dy * dy
    g *= spatial.density_sq(r2)
    g[~mask] = 0.0
    return g, dt, r2


def e_step(
    params: ParameterVector,
    temporal_kind: str,
    spatial_kind: str,
    data: EventSequence,
    background_weights=None,
) -> BranchingProbabilities:
    """Posterior parent-attribution probabilities at the given parameters.

    `background_weights` holds the mean-one background shape evaluated at
    the events (all ones for a constant background).
    """
    n = len(data)
    temporal, spatial = make_triggers(temporal_kind, spatial_kind, params)
    bg = params.mu * (np.ones(n) if background_weights is None else np.asarray(background_weights, dtype=float))
    p = np.zeros((n, n))
    horizon = temporal_horizon(temporal, params.k, spatial.peak, n)
    for a in range(0, n, _BLOCK):
        b = min(a + _BLOCK, n)
        lo = 0 if math.isinf(horizon) else int(np.searchsorted(data.t, data.t[a] - horizon, side="left"))
        g, _, _ = _trigger_rows(params.k, temporal, spatial, data, a, b, lo)
        denom = bg[a:b] + g.sum(axis=1)
        p[a:b, lo:b] = g / denom[:, None]
        p[np.arange(a, b), np.arange(a, b)] = bg[a:b] / denom
    return BranchingProbabilities(p)


def m_step(
    probs: BranchingProbabilities,
    data: EventSequence,
    window: Window,
    temporal_kind: str,
    spatial_kind: str,
    fallback: ParameterVector | None = None,
) -> ParameterVector:
    """Closed-form maximiser of the expected complete-data log-likelihood.

    With no triggered mass the trigger parameters are undefined; they are
    then taken from `fallback` (which must be supplied in that case).
    """
    n = len(probs)
    w = probs.p.copy()
    diag = np.arange(n)
    s_bg = float(w[diag, diag].sum())
    w[diag, diag] = 0.0
    mu = s_bg / window.volume

    s_p = float(w.sum())
    k = s_p / n
    dt = np.maximum(data.t[:, None] - data.t[None, :], 0.0)
    r = np.hypot(data.x[:, None] - data.x[None, :], data.y[:, None] - data.y[None, :])

    s_t = float((w * (dt if temporal_kind == "exponential" else np.log1p(dt))).sum())
    s_s = float((w * (r * r if spatial_kind == "gaussian" else r)).sum())
    if s_p <= 0 or s_t <= 0 or s_s <= 0:
        if fallback is None:
            raise ValueError("no triggered mass; trigger parameters are undefined without a fallback")
        return ParameterVector(mu, 0.0, fallback.temporal_param, fallback.spatial_param)

    tp = s_p / s_t if temporal_kind == "exponential" else 1.0 + s_p / s_t
    sp = math.sqrt(s_s / (2.0 * s_p)) if spatial_kind == "gaussian" else s_s / (2.0 * s_p)
    return ParameterVector(mu, k, tp, sp)


def _em_update(params, temporal_kind, spatial_kind, data, window, bgw):
    """One fused E+M pass that never materialises the probability matrix.

    Returns the updated parameters, the intensity at the events under the
    incoming parameters, and a degeneracy flag.
    """
    n = len(data)
    temporal, spatial = make_triggers(temporal_kind, spatial_kind, params)
    bg = params.mu * bgw
    horizon = temporal_horizon(temporal, params.k, spatial.peak, n)
    lam = np.empty(n)
    s_bg = s_p = s_t = s_s = 0.0
    use_lag = temporal_kind == "exponential"
    use_sq = spatial_kind == "gaussian"
    for a in range(0, n, _BLOCK):
        b = min(a + _BLOCK, n)
        lo = 0 if math.isinf(horizon) else int(np.searchsorted(data.t, data.t[a] - horizon, side="left"))
        g, dt, r2 = _trigger_rows(params.k, temporal, spatial, data, a, b, lo)
        rows = g.sum(axis=1)
        denom = bg[a:b] + rows
        lam[a:b] = denom
        s_bg += float((bg[a:b] / denom).sum())
        s_p += float((rows / denom).sum())
        wn = g / denom[:, None]
        s_t += float((wn * (dt if use_lag else np.log1p(dt))).sum())
        s_s += float((wn * (r2 if use_sq else np.sqrt(r2))).sum())

    mu = s_bg / window.volume
    if s_p <= 0 or s_t <= 0 or s_s <= 0:
        return ParameterVector(mu, 0.0, params.temporal_param, params.spatial_param), lam, True
    tp = s_p / s_t if use_lag else 1.0 + s_p / s_t
    sp = math.sqrt(s_s / (2.0 * s_p)) if use_sq else s_s / (2.0 * s_p)
    return ParameterVector(mu, s_p / n, tp, sp), lam, False


def fit_em(
    data: EventSequence,
    window: Window,
    temporal_kind: str = "exponential",
    spatial_kind: str = "gaussian",
    config: EmConfig | None = None,
    background_shape: SeparableBackground | None = None,
) -> FitResult:
    """Alternate E and M steps until the parameters (or the fitted
    intensities) stop moving.  The per-iteration parameter trace is kept on
    the result for convergence diagnostics."""
    if len(data) < 10:
        raise ValueError("need at least 10 events for a four-parameter fit")
    if not np.all(window.contains(data.x, data.y, data.t)):
        raise ValueError("events must lie inside the window")
    cfg = config or EmConfig()
    bgw = _background_weights(data, background_shape)
    params = cfg.initial or default_initial(data, window, temporal_kind)

    start = time.perf_counter()
    trace = [params]
    prev_lam = None
    converged = False
    notes = []
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        new_params, lam, degenerate = _em_update(params, temporal_kind, spatial_kind, data, window, bgw)
        trace.append(new_params)
        if degenerate and "degenerate-m-step" not in notes:
            notes.append("degenerate-m-step")
        if cfg.metric == "params":
            base = np.maximum(np.abs(params.as_array()), 1e-300)
            delta = float(np.max(np.abs(new_params.as_array() - params.as_array()) / base))
        else:
            delta = math.inf if prev_lam is None else float(np.max(np.abs(lam - prev_lam) / prev_lam))
        prev_lam = lam
        params = new_params
        if delta < cfg.tol:
            converged = True
            break

    temporal, spatial = make_triggers(temporal_kind, spatial_kind, params)
    lam = intensity_at_events(data, params.k, temporal, spatial, params.mu * bgw)
    # observed-data log-likelihood under the full-space triggering mass
    objective = float(np.log(lam).sum()) - params.mu * window.volume - params.k * len(data)
    return FitResult(
        estimate=params,
        objective=objective,
        evaluations=iterations,
        iterations=iterations,
        converged=converged,
        seconds=time.perf_counter() - start,
        trace=trace,
        notes=tuple(notes),
    )
