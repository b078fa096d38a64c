import math

import numpy as np
import pytest
from scipy.stats import lognorm, norm

from sthawkes import (
    BayesConfig,
    Event,
    LogNormalPrior,
    ParameterVector,
    PriorSpec,
    SeparableBackground,
    SpatialBanding,
    SpatialField,
    TemporalBinning,
    TemporalField,
    Window,
    band_weights,
    binned_log_likelihood,
    binned_trigger_mass,
    build_spatial_bands,
    build_temporal_bins,
    covering_radius,
    fit_bayes,
    linearize,
    run_metropolis,
)

KINDS = [
    ("exponential", "gaussian"),
    ("exponential", "exponential"),
    ("powerlaw", "gaussian"),
    ("powerlaw", "exponential"),
]


class TestBinsAndBands:
    def test_temporal_bins_example(self):
        bins = build_temporal_bins(0.0, 10.0, TemporalBinning(first_width=0.5, growth=1.0, max_bins=3))
        np.testing.assert_allclose(bins, [0.0, 0.5, 1.0, 2.0, 4.0, 10.0])

    def test_temporal_bins_truncated_by_window(self):
        bins = build_temporal_bins(0.0, 1.5, TemporalBinning(first_width=0.5, growth=1.0, max_bins=8))
        np.testing.assert_allclose(bins, [0.0, 0.5, 1.0, 1.5])

    def test_temporal_bins_monotone(self):
        for t_i in (0.0, 3.7, 95.0):
            bins = build_temporal_bins(t_i, 100.0, TemporalBinning())
            assert bins[0] == t_i
            assert np.all(np.diff(bins) > 0)
            assert bins[-1] <= 100.0

    def test_temporal_bins_require_room(self):
        with pytest.raises(ValueError):
            build_temporal_bins(5.0, 5.0, TemporalBinning())

    def test_spatial_bands_geometric(self):
        radii = build_spatial_bands(SpatialBanding(first_radius=0.05, growth=0.5, max_bands=4))
        np.testing.assert_allclose(radii, [0.05, 0.075, 0.1125, 0.16875])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TemporalBinning(first_width=0.0)
        with pytest.raises(ValueError):
            SpatialBanding(growth=-0.1)
        with pytest.raises(ValueError):
            SpatialBanding(mc_points=100)

    def test_covering_radius_corners(self, unit_window):
        assert covering_radius(0.5, 0.5, unit_window) == pytest.approx(math.hypot(0.5, 0.5))
        assert covering_radius(0.0, 0.0, unit_window) == pytest.approx(math.hypot(1.0, 1.0))
        assert covering_radius(0.2, 0.9, unit_window) == pytest.approx(math.hypot(0.8, 0.9))


class TestBandWeights:
    def test_interior_annuli_fully_inside(self, unit_window):
        w = band_weights((0.5, 0.5), [0.05, 0.1, 0.2], unit_window)
        np.testing.assert_array_equal(w, 1.0)

    def test_corner_event_quarter_coverage(self, unit_window):
        w = band_weights((0.0, 0.0), [0.05], unit_window, mc_points=50000, seed=3)
        assert w[0] == pytest.approx(0.25, abs=0.01)

    def test_covering_band_fraction(self, unit_window):
        # annulus from 1.0 out to the covering radius of the centre: only a
        # sliver near the corners lies inside the unit square
        r_cov = covering_radius(0.5, 0.5, unit_window)
        w = band_weights((0.5, 0.5), [1.0, r_cov * 1.0000001], unit_window, mc_points=50000)
        assert w[-1] < 0.05

    def test_deterministic_for_seed(self, unit_window):
        a = band_weights((0.3, 0.4), [0.05, 0.2], unit_window, seed=11)
        b = band_weights((0.3, 0.4), [0.05, 0.2], unit_window, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_center_outside_rejected(self, unit_window):
        with pytest.raises(ValueError):
            band_weights((1.5, 0.5), [0.1], unit_window)


class TestBinnedTriggerMass:
    @pytest.mark.parametrize("temporal_kind,spatial_kind", KINDS)
    def test_full_coverage_mass_is_k(self, temporal_kind, spatial_kind):
        # bins out to a huge horizon and bands covering the plane with unit
        # weights integrate the whole trigger: the mass telescopes to k
        tp = 1.0 if temporal_kind == "exponential" else 3.5
        params = ParameterVector(2.0, 0.73, tp, 0.05)
        event = Event(0.5, 0.5, 0.0)
        bins = np.array([0.0, 0.5, 1.0, 2.0, 1e9])
        radii = np.array([0.05, 0.1, 1e6])
        mass = binned_trigger_mass(
            params, temporal_kind, spatial_kind, event, bins, radii, np.ones(radii.size)
        )
        assert mass == pytest.approx(0.73, abs=1e-9)

    def test_zero_weights_zero_mass(self):
        params = ParameterVector(2.0, 0.5, 1.0, 0.05)
        mass = binned_trigger_mass(
            params, "exponential", "gaussian", Event(0.5, 0.5, 0.0), [0.0, 1e9], [1e6], [0.0]
        )
        assert mass == 0.0

    def test_mass_scales_with_k(self):
        event = Event(0.5, 0.5, 1.0)
        bins = np.array([1.0, 1.5, 3.0, 10.0])
        radii = np.array([0.05, 0.2])
        weights = np.array([1.0, 0.8])
        a = binned_trigger_mass(ParameterVector(2, 0.3, 1.0, 0.05), "exponential", "gaussian", event, bins, radii, weights)
        b = binned_trigger_mass(ParameterVector(2, 0.6, 1.0, 0.05), "exponential", "gaussian", event, bins, radii, weights)
        assert b == pytest.approx(2.0 * a, rel=1e-12)


class TestPriors:
    def test_lognormal_matches_scipy(self):
        prior = LogNormalPrior(location=math.log(0.5), scale=0.8)
        for v in (0.1, 0.5, 2.0, 7.3):
            want = lognorm.logpdf(v, s=0.8, scale=0.5)
            assert prior.log_density(v) == pytest.approx(want, rel=1e-12)

    def test_log_scale_density_is_gaussian(self):
        prior = LogNormalPrior(location=0.3, scale=1.1)
        for u in (-2.0, 0.0, 0.3, 1.7):
            want = norm.logpdf(u, loc=0.3, scale=1.1)
            assert prior.log_density_log_scale(u) == pytest.approx(want, rel=1e-12)

    def test_default_prior_peaks_at_initial(self):
        initial = ParameterVector(3.0, 0.5, 1.0, 0.05)
        spec = PriorSpec.default_for(initial, "exponential")
        u0 = np.log(initial.as_array())
        at_mode = spec.log_density_log_scale(u0)
        assert at_mode > spec.log_density_log_scale(u0 + 0.3)
        assert at_mode > spec.log_density_log_scale(u0 - 0.3)

    def test_prior_shifts_objective_exactly(self, pattern_1b, short_window):
        params = ParameterVector(4.0, 0.6, 2.5, 0.03)
        spec = PriorSpec.default_for(params, "exponential")
        bare = binned_log_likelihood(params, pattern_1b, short_window, TemporalBinning(), SpatialBanding())
        with_prior = binned_log_likelihood(
            params, pattern_1b, short_window, TemporalBinning(), SpatialBanding(), prior=spec
        )
        assert with_prior - bare == pytest.approx(spec.log_density(params, "exponential"), rel=1e-12)


class TestBinnedLikelihood:
    def test_background_only_is_exact_poisson(self, pattern_1b, short_window):
        n = len(pattern_1b)
        params = ParameterVector(3.0, 0.0, 1.0, 0.05)
        got = binned_log_likelihood(params, pattern_1b, short_window, TemporalBinning(), SpatialBanding())
        want = n * math.log(3.0) - 3.0 * short_window.volume
        assert got == pytest.approx(want, abs=1e-9)

    def test_compensator_matches_closed_form(self, short_window):
        # Gaussian spatial mass inside a box factorises into normal CDFs,
        # giving an exact compensator to compare the band approximation to
        from sthawkes import EventSequence, TemporalTrigger
        from sthawkes.model import intensity_at_events, make_triggers

        rng = np.random.default_rng(8)
        n = 40
        x = rng.uniform(0, 1, n)
        y = rng.uniform(0, 1, n)
        t = np.sort(rng.uniform(0, 30, n))
        data = EventSequence(x, y, t)
        params = ParameterVector(2.0, 0.7, 1.5, 0.08)
        banding = SpatialBanding(first_radius=0.02, growth=0.25, max_bands=16, mc_points=40000)
        got = binned_log_likelihood(params, data, short_window, TemporalBinning(max_bins=20), banding)

        temporal, spatial = make_triggers("exponential", "gaussian", params)
        lam = intensity_at_events(data, params.k, temporal, spatial, np.full(n, params.mu))
        sigma = params.spatial_param

        def phi_mass(lo, hi, c):
            a = (lo - c) / sigma
            b = (hi - c) / sigma
            return 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))

        comp = params.mu * short_window.volume
        for i in range(n):
            t_mass = temporal.cdf(30.0 - t[i])
            s_mass = phi_mass(0.0, 1.0, x[i]) * phi_mass(0.0, 1.0, y[i])
            comp += params.k * t_mass * s_mass
        want = float(np.log(lam).sum()) - comp
        assert got == pytest.approx(want, abs=0.05 * params.k * n * 0.05 + 0.5)

    def test_finer_bands_reduce_compensator_error(self, short_window):
        from sthawkes import EventSequence, TemporalTrigger
        from sthawkes.model import intensity_at_events, make_triggers

        rng = np.random.default_rng(9)
        n = 30
        data = EventSequence(
            rng.uniform(0, 1, n), rng.uniform(0, 1, n), np.sort(rng.uniform(0, 30, n))
        )
        params = ParameterVector(2.0, 0.8, 1.0, 0.15)

        temporal, spatial = make_triggers("exponential", "gaussian", params)
        lam = intensity_at_events(data, params.k, temporal, spatial, np.full(n, params.mu))
        sigma = params.spatial_param

        def phi_mass(lo, hi, c):
            a = (lo - c) / (sigma * math.sqrt(2))
            b = (hi - c) / (sigma * math.sqrt(2))
            return 0.5 * (math.erf(b) - math.erf(a))

        comp = params.mu * short_window.volume
        for i in range(n):
            comp += (
                params.k
                * temporal.cdf(30.0 - data.t[i])
                * phi_mass(0, 1, data.x[i])
                * phi_mass(0, 1, data.y[i])
            )
        exact = float(np.log(lam).sum()) - comp

        coarse = binned_log_likelihood(
            params, data, short_window, TemporalBinning(), SpatialBanding(first_radius=0.3, max_bands=2)
        )
        fine = binned_log_likelihood(
            params,
            data,
            short_window,
            TemporalBinning(),
            SpatialBanding(first_radius=0.02, growth=0.25, max_bands=16, mc_points=40000),
        )
        assert abs(fine - exact) <= abs(coarse - exact)
        assert abs(fine - exact) < 0.25


class TestLinearize:
    def test_gradient_matches_analytic(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            a = rng.uniform(-2, 2, 4)
            b = rng.uniform(-1, 1, 4)
            theta0 = rng.uniform(0.2, 3.0, 4)

            def f(theta):
                return float(np.sum(a * np.log(theta) + b * theta))

            lin = linearize(f, theta0)
            grad = a / theta0 + b
            np.testing.assert_allclose(lin.gradient, grad, rtol=1e-4, atol=1e-8)
            assert lin(theta0) == pytest.approx(f(theta0), rel=1e-12)

    def test_affine_evaluation(self):
        lin = linearize(lambda th: float(3.0 * th[0] - 2.0 * th[1]), np.array([1.0, 1.0]))
        assert lin(np.array([2.0, 1.0])) == pytest.approx(4.0, abs=1e-6)

    def test_accepts_parameter_vector(self):
        params = ParameterVector(2.0, 0.5, 1.0, 0.05)
        lin = linearize(lambda th: float(np.sum(th)), params)
        np.testing.assert_allclose(lin.point, params.as_array())

    def test_rejects_nonfinite_point(self):
        with pytest.raises(ValueError):
            linearize(lambda th: math.inf, np.ones(2))


class TestMetropolis:
    @staticmethod
    def _target(u):
        return -0.5 * float(u @ u)

    def test_deterministic_replay(self):
        cov = np.eye(2)
        a, acc_a = run_metropolis(self._target, np.zeros(2), cov, draws=200, burn_in=20, seed=5)
        b, acc_b = run_metropolis(self._target, np.zeros(2), cov, draws=200, burn_in=20, seed=5)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(acc_a, acc_b)

    def test_matches_reference_implementation(self):
        # independent replay of the documented draw order: proposal normals
        # first, then one uniform per step
        d, draws, burn_in, seed = 2, 150, 30, 42
        cov = np.array([[1.0, 0.3], [0.3, 2.0]])
        got, got_acc = run_metropolis(self._target, np.zeros(d), cov, draws, burn_in, seed)

        rng = np.random.default_rng(seed)
        scale = 2.38**2 / d
        chol = np.linalg.cholesky(scale * cov + 1e-12 * np.eye(d))
        cur = np.zeros(d)
        cur_lp = self._target(cur)
        samples = []
        accepted = []
        for step in range(draws + burn_in):
            prop = cur + chol @ rng.standard_normal(d)
            lp = self._target(prop)
            ok = math.log(rng.uniform()) <= lp - cur_lp
            accepted.append(ok)
            if ok:
                cur, cur_lp = prop, lp
            if step >= burn_in:
                samples.append(cur.copy())
        np.testing.assert_array_equal(got, np.array(samples))
        np.testing.assert_array_equal(got_acc, np.array(accepted))

    def test_chain_explores_target(self):
        samples, accepted = run_metropolis(self._target, np.zeros(1), np.eye(1), 4000, 500, seed=7)
        assert 0.1 < accepted.mean() < 0.9
        assert abs(samples.mean()) < 0.15
        assert samples.std() == pytest.approx(1.0, abs=0.15)


class TestFitBayes:
    def test_laplace_summary(self, pattern_1b, short_window):
        summary = fit_bayes(pattern_1b, short_window)
        assert summary.converged
        assert summary.seconds > 0
        est = summary.mean.as_array()
        assert est[0] == pytest.approx(4.0, rel=0.35)
        assert 0.35 < est[1] < 0.85
        assert est[2] == pytest.approx(2.5, rel=0.4)
        assert est[3] == pytest.approx(0.03, rel=0.35)
        assert np.all(summary.sd > 0)
        eigvals = np.linalg.eigvalsh(summary.covariance)
        assert np.all(eigvals > 0)

    def test_mode_and_mean_close_on_peaked_posterior(self, pattern_1b, short_window):
        summary = fit_bayes(pattern_1b, short_window)
        np.testing.assert_allclose(
            summary.mean.as_array(), summary.mode.as_array(), rtol=0.2
        )

    def test_mcmc_summary(self, pattern_1b, short_window):
        cfg = BayesConfig(mcmc=True, draws=300, burn_in=60, mcmc_seed=2)
        summary = fit_bayes(pattern_1b, short_window, config=cfg)
        assert summary.samples is not None
        assert summary.samples.shape == (300, 4)
        assert np.all(summary.samples > 0)
        assert any(n.startswith("mcmc-acceptance=") for n in summary.notes)
        assert 0.3 < summary.mean.k < 0.9

    def test_mcmc_deterministic(self, pattern_1b, short_window):
        cfg = BayesConfig(mcmc=True, draws=80, burn_in=20, mcmc_seed=9)
        a = fit_bayes(pattern_1b, short_window, config=cfg)
        b = fit_bayes(pattern_1b, short_window, config=cfg)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_too_few_events_rejected(self, short_window):
        from sthawkes import EventSequence

        data = EventSequence(np.full(4, 0.5), np.full(4, 0.5), np.arange(4.0))
        with pytest.raises(ValueError):
            fit_bayes(data, short_window)

    def test_outside_window_rejected(self, short_window):
        from sthawkes import EventSequence

        data = EventSequence(np.full(12, 0.5), np.full(12, 0.5), np.linspace(0, 50, 12))
        with pytest.raises(ValueError):
            fit_bayes(data, short_window)

    def test_unit_background_shape_matches_constant(self, pattern_1b, short_window):
        # an all-ones shape is the constant background in disguise, so the
        # shaped fit must land where the plain fit does
        shape = SeparableBackground(
            1.0,
            SpatialField(np.linspace(0, 1, 5), np.linspace(0, 1, 5), np.ones((5, 5))),
            TemporalField(np.linspace(0, 30, 5), np.ones(5)),
        )
        plain = fit_bayes(pattern_1b, short_window)
        shaped = fit_bayes(pattern_1b, short_window, background_shape=shape)
        np.testing.assert_allclose(shaped.mean.as_array(), plain.mean.as_array(), rtol=1e-6)

    def test_tight_prior_pulls_estimate(self, pattern_1b, short_window):
        # a very tight prior at wrong values should drag the mode towards it
        wrong = ParameterVector(1.0, 0.2, 5.0, 0.1)
        tight = PriorSpec.default_for(wrong, "exponential", scale=0.05)
        loose = PriorSpec.default_for(wrong, "exponential", scale=10.0)
        pulled = fit_bayes(pattern_1b, short_window, priors=tight)
        free = fit_bayes(pattern_1b, short_window, priors=loose)
        assert abs(pulled.mode.k - 0.2) < abs(free.mode.k - 0.2)
