"""Bayesian fitting on a binned decomposition of the integrated intensity.

The integrated conditional intensity splits into the background mass plus a
per-event triggering mass.  The triggering mass is approximated by summing,
over geometric temporal bins after the event and concentric spatial bands
around it, the product of the trigger cdf masses, with each band weighted
by the fraction of its annulus lying inside the spatial region (estimated
by uniform Monte Carlo sampling).  Posteriors are computed by MAP in
log-parameter space with a Laplace (finite-difference Hessian) covariance,
optionally refined by random-walk Metropolis.  Log-normal priors on the
positive parameters are Gaussian in log space, which is where the
optimiser works.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .likelihood import _from_log, _to_log, default_initial
from .model import (
    Event,
    EventSequence,
    ParameterVector,
    SeparableBackground,
    Window,
    intensity_at_events,
    make_triggers,
)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TemporalBinning:
    """Geometric bin boundaries after each event: first_width * (1 + growth)^j."""

    first_width: float = 0.5
    growth: float = 1.0
    max_bins: int = 10

    def __post_init__(self) -> None:
        if not (self.first_width > 0 and self.growth > 0 and self.max_bins >= 1):
            raise ValueError("binning parameters must be positive")


@dataclass(frozen=True)
class SpatialBanding:
    """Concentric band radii around each event: first_radius * (1 + growth)^i."""

    first_radius: float = 0.05
    growth: float = 0.5
    max_bands: int = 10
    mc_points: int = 10000
    weight_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.first_radius > 0 and self.growth > 0 and self.max_bands >= 1):
            raise ValueError("banding parameters must be positive")
        if self.mc_points < 1000:
            raise ValueError("mc_points must be at least 1000 for stable weights")


@dataclass(frozen=True)
class LogNormalPrior:
    location: float
    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("prior scale must be positive")

    def log_density(self, value: float) -> float:
        """Log-normal density on the positive scale."""
        if value <= 0:
            return -math.inf
        z = (math.log(value) - self.location) / self.scale
        return -math.log(value) - math.log(self.scale) - 0.5 * (_LOG_2PI + z * z)

    def log_density_log_scale(self, u: float) -> float:
        """The same prior seen in log coordinates: a plain Gaussian."""
        z = (u - self.location) / self.scale
        return -math.log(self.scale) - 0.5 * (_LOG_2PI + z * z)


@dataclass(frozen=True)
class PriorSpec:
    """Independent log-normal priors on the four positive parameters.

    For a power-law temporal trigger the prior applies to the excess
    exponent (gamma - 1), the quantity that is log-transformed during
    optimisation.
    """

    mu: LogNormalPrior
    k: LogNormalPrior
    temporal_param: LogNormalPrior
    spatial_param: LogNormalPrior

    @classmethod
    def default_for(cls, initial: ParameterVector, temporal_kind: str, scale: float = 1.0) -> "PriorSpec":
        """Weakly informative: located at the initial values, unit log scale."""
        tp = initial.temporal_param - 1.0 if temporal_kind == "powerlaw" else initial.temporal_param
        return cls(
            mu=LogNormalPrior(math.log(initial.mu), scale),
            k=LogNormalPrior(math.log(initial.k), scale),
            temporal_param=LogNormalPrior(math.log(tp), scale),
            spatial_param=LogNormalPrior(math.log(initial.spatial_param), scale),
        )

    def _as_tuple(self):
        return (self.mu, self.k, self.temporal_param, self.spatial_param)

    def log_density(self, params: ParameterVector, temporal_kind: str = "exponential") -> float:
        tp = params.temporal_param - 1.0 if temporal_kind == "powerlaw" else params.temporal_param
        vals = (params.mu, params.k, tp, params.spatial_param)
        return sum(pr.log_density(v) for pr, v in zip(self._as_tuple(), vals))

    def log_density_log_scale(self, u: np.ndarray) -> float:
        return sum(pr.log_density_log_scale(float(v)) for pr, v in zip(self._as_tuple(), u))


@dataclass(frozen=True)
class BayesConfig:
    initial: ParameterVector | None = None
    max_evals: int = 2000
    tol: float = 1e-6
    mcmc: bool = False
    draws: int = 5000
    burn_in: int = 1000
    mcmc_seed: int = 0

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.draws < 1 or self.burn_in < 0:
            raise ValueError("draws must be positive and burn_in non-negative")


@dataclass
class PosteriorSummary:
    """Posterior mode, curvature and positive-scale moments."""

    mode: ParameterVector
    covariance: np.ndarray  # in log-parameter coordinates
    mean: ParameterVector
    sd: np.ndarray
    seconds: float
    evaluations: int
    converged: bool
    samples: np.ndarray | None = None
    notes: tuple = ()


def build_temporal_bins(t_i: float, t_end: float, binning: TemporalBinning) -> np.ndarray:
    """Bin boundaries t_i, t_i + w, t_i + w(1+g), ..., t_end.

    Geometric boundaries are kept while they stay below t_end, up to
    max_bins of them; the window end always closes the last bin.
    """
    if not t_i < t_end:
        raise ValueError("event time must precede the window end")
    bounds = [t_i]
    for j in range(binning.max_bins + 1):
        b = t_i + binning.first_width * (1.0 + binning.growth) ** j
        if b >= t_end:
            break
        bounds.append(b)
    bounds.append(t_end)
    out = np.array(bounds)
    keep = np.concatenate([[True], np.diff(out) > 1e-12 * (t_end - t_i)])
    return out[keep]


def build_spatial_bands(banding: SpatialBanding) -> np.ndarray:
    """Geometric outer radii of the concentric bands.

    The returned radii never cover the whole region on their own; callers
    append a per-event covering radius so the last band reaches every corner
    of the window.
    """
    i = np.arange(banding.max_bands)
    return banding.first_radius * (1.0 + banding.growth) ** i


def covering_radius(x: float, y: float, window: Window) -> float:
    """Distance from (x, y) to the farthest corner of the spatial region."""
    dx = max(x - window.x_min, window.x_max - x)
    dy = max(y - window.y_min, window.y_max - y)
    return math.hypot(dx, dy)


def band_weights(center, radii, window: Window, mc_points: int = 10000, seed: int = 0) -> np.ndarray:
    """Fraction of each annulus lying inside the spatial region.

    Annuli are [0, r_1], [r_1, r_2], ... for the given outer radii.  Points
    are drawn uniformly over each annulus (area-uniform radius, uniform
    angle); the weight is the fraction landing inside the window's spatial
    box.  Deterministic for a fixed seed.
    """
    cx, cy = center
    if not (window.x_min <= cx <= window.x_max and window.y_min <= cy <= window.y_max):
        raise ValueError("center must lie inside the spatial region")
    radii = np.asarray(radii, dtype=float)
    rng = np.random.default_rng(seed)
    inner = np.concatenate([[0.0], radii[:-1]])
    weights = np.empty(radii.size)
    for p in range(radii.size):
        rr = np.sqrt(inner[p] ** 2 + rng.uniform(size=mc_points) * (radii[p] ** 2 - inner[p] ** 2))
        ang = rng.uniform(0.0, 2.0 * math.pi, mc_points)
        px = cx + rr * np.cos(ang)
        py = cy + rr * np.sin(ang)
        inside = (px >= window.x_min) & (px <= window.x_max) & (py >= window.y_min) & (py <= window.y_max)
        weights[p] = inside.mean()
    return weights


def binned_trigger_mass(
    params: ParameterVector,
    temporal_kind: str,
    spatial_kind: str,
    event: Event,
    bins,
    band_radii,
    weights,
) -> float:
    """k times the binned triggering mass of a single event.

    `bins` are absolute temporal boundaries starting at the event time;
    `band_radii` are outer annulus radii whose last entry covers the window;
    `weights` holds the in-window fraction of each annulus.  The double sum
    over bins and bands factorises into (temporal mass) * (weighted spatial
    mass) because the weights do not depend on the bin.
    """
    temporal, spatial = make_triggers(temporal_kind, spatial_kind, params)
    lags = np.asarray(bins, dtype=float) - event.t
    t_mass = float(np.diff(temporal.cdf(lags)).sum())
    radii = np.concatenate([[0.0], np.asarray(band_radii, dtype=float)])
    s_mass = np.diff(spatial.radial_cdf(radii))
    return params.k * t_mass * float((s_mass * np.asarray(weights)).sum())


class _BinnedEvaluator:
    """Per-dataset caches: bin lags, band radii with covering radius, and
    Monte Carlo band weights, all computed once and reused across parameter
    evaluations."""

    def __init__(
        self,
        data: EventSequence,
        window: Window,
        binning: TemporalBinning,
        banding: SpatialBanding,
        temporal_kind: str,
        spatial_kind: str,
        background_weights: np.ndarray | None = None,
    ):
        self.data = data
        self.window = window
        self.temporal_kind = temporal_kind
        self.spatial_kind = spatial_kind
        n = len(data)
        self.bgw = np.ones(n) if background_weights is None else background_weights

        all_bins = [build_temporal_bins(float(t), window.t_max, binning) for t in data.t]
        width = max(len(b) for b in all_bins)
        lag_bounds = np.zeros((n, width))
        for i, b in enumerate(all_bins):
            lag_bounds[i, : len(b)] = b - data.t[i]
            lag_bounds[i, len(b) :] = b[-1] - data.t[i]  # padding adds zero-width bins
        self.lag_bounds = lag_bounds

        base = build_spatial_bands(banding)
        cover = np.array([covering_radius(float(x), float(y), window) for x, y in zip(data.x, data.y)])
        cover = np.maximum(cover, base[-1] * (1.0 + 1e-12))
        self.radii = np.concatenate(
            [np.zeros((n, 1)), np.tile(base, (n, 1)), cover[:, None]], axis=1
        )
        self.weights = self._batched_weights(base, cover, banding)

    def _batched_weights(self, base: np.ndarray, cover: np.ndarray, banding: SpatialBanding) -> np.ndarray:
        """Annulus weights for every event, drawn from one seeded stream.

        Same estimator as band_weights, vectorised over events in blocks;
        annulus p is sampled for a whole block at a time.
        """
        data, window = self.data, self.window
        n = len(data)
        m = base.size + 1
        rng = np.random.default_rng(banding.weight_seed)
        weights = np.empty((n, m))
        mc = banding.mc_points
        for a in range(0, n, 256):
            b = min(a + 256, n)
            cx = data.x[a:b, None]
            cy = data.y[a:b, None]
            inner_all = np.concatenate([[0.0], base])
            for p in range(m):
                inner = inner_all[p]
                outer = base[p] if p < base.size else cover[a:b, None]
                rr = np.sqrt(inner**2 + rng.uniform(size=(b - a, mc)) * (np.square(outer) - inner**2))
                ang = rng.uniform(0.0, 2.0 * math.pi, size=(b - a, mc))
                px = cx + rr * np.cos(ang)
                py = cy + rr * np.sin(ang)
                inside = (
                    (px >= window.x_min)
                    & (px <= window.x_max)
                    & (py >= window.y_min)
                    & (py <= window.y_max)
                )
                weights[a:b, p] = inside.mean(axis=1)
        return weights

    def log_likelihood(self, params: ParameterVector) -> float:
        temporal, spatial = make_triggers(self.temporal_kind, self.spatial_kind, params)
        lam = intensity_at_events(self.data, params.k, temporal, spatial, params.mu * self.bgw)
        if np.any(lam <= 0):
            return -math.inf
        t_mass = np.diff(temporal.cdf(self.lag_bounds), axis=1).sum(axis=1)
        s_mass = np.diff(spatial.radial_cdf(self.radii), axis=1)
        trigger = params.k * float((t_mass * (s_mass * self.weights).sum(axis=1)).sum())
        background = params.mu * self.window.volume
        return float(np.log(lam).sum()) - background - trigger


def binned_log_likelihood(
    params: ParameterVector,
    data: EventSequence,
    window: Window,
    binning: TemporalBinning,
    banding: SpatialBanding,
    prior: PriorSpec | None = None,
    temporal_kind: str = "exponential",
    spatial_kind: str = "gaussian",
) -> float:
    """One-shot evaluation of the binned log-likelihood (plus log prior)."""
    ev = _BinnedEvaluator(data, window, binning, banding, temporal_kind, spatial_kind)
    value = ev.log_likelihood(params)
    if prior is not None:
        value += prior.log_density(params, temporal_kind)
    return value


@dataclass(frozen=True)
class LinearizedFunction:
    """First-order expansion f(point) + gradient . (theta - point)."""

    point: np.ndarray
    value: float
    gradient: np.ndarray

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return self.value + float(self.gradient @ (theta - self.point))


def linearize(f, theta_star, rel_step: float = 1e-5) -> LinearizedFunction:
    """Linearise a scalar function around theta_star by central differences."""
    if isinstance(theta_star, ParameterVector):
        theta_star = theta_star.as_array()
    theta = np.asarray(theta_star, dtype=float)
    f0 = float(f(theta))
    if not math.isfinite(f0):
        raise ValueError("function is not finite at the expansion point")
    grad = np.empty(theta.size)
    for i in range(theta.size):
        h = rel_step * max(abs(theta[i]), rel_step)
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (float(f(up)) - float(f(dn))) / (2.0 * h)
    return LinearizedFunction(point=theta, value=f0, gradient=grad)


def _fd_hessian(f, u: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian with per-coordinate steps."""
    d = u.size
    h = step * np.maximum(np.abs(u), 1.0)
    hess = np.empty((d, d))
    f0 = f(u)

    def at(delta):
        return f(u + delta)

    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        hess[i, i] = (at(ei) - 2.0 * f0 + at(-ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (at(ei + ej) - at(ei - ej) - at(-ei + ej) + at(-ei - ej)) / (
                4.0 * h[i] * h[j]
            )
    return hess


def run_metropolis(log_post, u0: np.ndarray, proposal_cov: np.ndarray, draws: int, burn_in: int, seed: int):
    """Random-walk Metropolis in log-parameter space.

    Per step the generator draws the proposal normals first, then one
    uniform for the acceptance test; acceptance compares log(u) with the
    exact log-posterior difference.  Returns the post-burn-in chain and the
    acceptance indicators for every step.
    """
    d = u0.size
    rng = np.random.default_rng(seed)
    scale = 2.38**2 / d
    chol = np.linalg.cholesky(scale * proposal_cov + 1e-12 * np.eye(d))
    cur = u0.copy()
    cur_lp = float(log_post(cur))
    samples = np.empty((draws, d))
    accepted = np.zeros(draws + burn_in, dtype=bool)
    for step in range(draws + burn_in):
        prop = cur + chol @ rng.standard_normal(d)
        lp = float(log_post(prop))
        if math.log(rng.uniform()) <= lp - cur_lp:
            cur, cur_lp = prop, lp
            accepted[step] = True
        if step >= burn_in:
            samples[step - burn_in] = cur
    return samples, accepted


def fit_bayes(
    data: EventSequence,
    window: Window,
    temporal_kind: str = "exponential",
    spatial_kind: str = "gaussian",
    binning: TemporalBinning = TemporalBinning(),
    banding: SpatialBanding = SpatialBanding(),
    priors: PriorSpec | None = None,
    config: BayesConfig | None = None,
    background_shape: SeparableBackground | None = None,
) -> PosteriorSummary:
    """MAP plus Laplace posterior on the binned likelihood.

    The mode is found by Nelder-Mead on the log-posterior in log-parameter
    space; the covariance is the inverse finite-difference Hessian at the
    mode (diagonally regularised if not positive definite); posterior means
    and SDs are the log-normal moments implied by that Gaussian, replaced
    by empirical moments of a random-walk Metropolis chain when
    config.mcmc is set.
    """
    if len(data) < 10:
        raise ValueError("need at least 10 events for a four-parameter fit")
    if not np.all(window.contains(data.x, data.y, data.t)):
        raise ValueError("events must lie inside the window")
    cfg = config or BayesConfig()
    initial = cfg.initial or default_initial(data, window, temporal_kind)
    if priors is None:
        priors = PriorSpec.default_for(initial, temporal_kind)

    start = time.perf_counter()
    bgw = None
    if background_shape is not None:
        bgw = np.asarray(
            background_shape.spatial_field.value_at(data.x, data.y)
            * background_shape.temporal_field.value_at(data.t),
            dtype=float,
        )
    evaluator = _BinnedEvaluator(data, window, binning, banding, temporal_kind, spatial_kind, bgw)

    def log_posterior(u: np.ndarray) -> float:
        if np.any(np.abs(u) > 100.0):  # overflow guard for runaway simplex steps
            return -math.inf
        value = evaluator.log_likelihood(_from_log(u, temporal_kind))
        return value + priors.log_density_log_scale(u)

    res = minimize(
        lambda u: -log_posterior(u),
        _to_log(initial, temporal_kind),
        method="Nelder-Mead",
        options={"maxfev": cfg.max_evals, "fatol": cfg.tol, "xatol": 1e-4},
    )
    u_star = res.x
    notes = []

    hess = -_fd_hessian(log_posterior, u_star)
    hess = 0.5 * (hess + hess.T)
    eigvals = np.linalg.eigvalsh(hess)
    if eigvals.min() <= 0:
        hess = hess + (abs(eigvals.min()) + 1e-6) * np.eye(4)
        notes.append("hessian-regularized")
    cov = np.linalg.inv(hess)
    cov = 0.5 * (cov + cov.T)

    samples = None
    if cfg.mcmc:
        chain_u, accepted = run_metropolis(
            log_posterior, u_star, cov, cfg.draws, cfg.burn_in, cfg.mcmc_seed
        )
        samples = np.stack([_from_log(u, temporal_kind).as_array() for u in chain_u])
        mean_arr = samples.mean(axis=0)
        sd = samples.std(axis=0, ddof=1)
        notes.append(f"mcmc-acceptance={accepted.mean():.3f}")
    else:
        var = np.diag(cov)
        mean_log = np.exp(u_star + 0.5 * var)
        sd_log = mean_log * np.sqrt(np.expm1(var))
        offset = np.array([0.0, 0.0, 1.0 if temporal_kind == "powerlaw" else 0.0, 0.0])
        mean_arr = mean_log + offset
        sd = sd_log

    return PosteriorSummary(
        mode=_from_log(u_star, temporal_kind),
        covariance=cov,
        mean=ParameterVector.from_array(mean_arr),
        sd=sd,
        seconds=time.perf_counter() - start,
        evaluations=int(res.nfev),
        converged=bool(res.success),
        samples=samples,
        notes=tuple(notes),
    )
