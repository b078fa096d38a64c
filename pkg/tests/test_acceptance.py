"""Full-replication acceptance gates.

Each test prints one verdict line (kept visible under output capture) and
then asserts its tolerance band, so a run of this module reads as a
pass/fail checklist: simulator count calibration, recovery studies for
the three fitters at 30 replications, grid-resolution sensitivity, fit
timing order, a property pack checked against independent numeric
oracles, and the inhomogeneous-background case.

The whole module takes roughly 20 minutes on one core; use -k to run a
single gate.
"""
import dataclasses
import math
import time

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from sthawkes import (
    ConstantBackground,
    EmConfig,
    Event,
    EventSequence,
    GridSpec,
    HawkesModel,
    MleConfig,
    ParameterVector,
    SimConfig,
    SpatialBanding,
    SpatialTrigger,
    TemporalBinning,
    TemporalTrigger,
    Window,
    binned_log_likelihood,
    binned_trigger_mass,
    e_step,
    fit_em,
    linearize,
    log_likelihood,
    m_step,
    run_scenario,
    scenario_by_id,
    simulate,
    write_events_csv,
)

KIND_COMBOS = [
    ("exponential", "gaussian"),
    ("exponential", "exponential"),
    ("powerlaw", "gaussian"),
    ("powerlaw", "exponential"),
]


def _verdict(capsys, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{label}] {detail} -> {'PASS' if ok else 'FAIL'}", flush=True)
    assert ok, f"{label}: {detail}"


def test_1_expected_counts(capsys):
    """Mean realized counts of both simulators against their calibration
    targets, 100 seeds each."""
    model = HawkesModel(
        background=ConstantBackground(5.0),
        k=0.5,
        temporal=TemporalTrigger("exponential", 2.5),
        spatial=SpatialTrigger("gaussian", 0.03),
    )
    window = Window(0.0, 1.0, 0.0, 1.0, 0.0, 100.0)
    start = time.perf_counter()
    po = np.array(
        [len(simulate(model, window, SimConfig(seed=1000 + i)).events) for i in range(100)],
        dtype=float,
    )
    th = np.array(
        [
            len(simulate(model, window, SimConfig(seed=1000 + i, method="thinning")).events)
            for i in range(100)
        ],
        dtype=float,
    )
    elapsed = time.perf_counter() - start
    ok = abs(po.mean() - 994.0) <= 20.0 and abs(th.mean() - 956.0) <= 20.0 and elapsed < 120.0
    _verdict(
        capsys,
        "1/8 expected-counts",
        ok,
        f"branching mean {po.mean():.1f} (target 994+-20), "
        f"thinning mean {th.mean():.1f} (target 956+-20), {elapsed:.0f}s of 120s",
    )


def test_2_em_recovery(capsys):
    start = time.perf_counter()
    table = run_scenario(scenario_by_id("1a"))
    elapsed = time.perf_counter() - start
    mm = table.methods["em"]
    targets = {
        "mu": (2.269, 0.15),
        "k": (0.767, 0.04),
        "temporal_param": (1.052, 0.08),
        "spatial_param": (0.047, 0.003),
    }
    ok = (
        all(abs(mm.mean[p] - centre) < tol for p, (centre, tol) in targets.items())
        and mm.failures == 0
        and elapsed < 300.0
    )
    detail = ", ".join(
        f"{p} {mm.mean[p]:.4f} ({centre}+-{tol})" for p, (centre, tol) in targets.items()
    )
    _verdict(capsys, "2/8 em-recovery", ok, f"{detail}, {elapsed:.0f}s of 300s")


def test_3_mle_recovery(capsys):
    start = time.perf_counter()
    table = run_scenario(dataclasses.replace(scenario_by_id("2b"), fit_methods=("mle",)))
    elapsed = time.perf_counter() - start
    mm = table.methods["mle"]
    ok = (
        abs(mm.mean["spatial_param"] - 0.010) < 0.0006
        and abs(mm.mean["k"] - 0.602) < 0.04
        and mm.failures == 0
        and elapsed < 1800.0
    )
    _verdict(
        capsys,
        "3/8 mle-recovery",
        ok,
        f"beta {mm.mean['spatial_param']:.5f} (0.010+-0.0006), "
        f"k {mm.mean['k']:.4f} (0.602+-0.04), {elapsed:.0f}s of 1800s",
    )


def test_4_bayes_recovery(capsys):
    start = time.perf_counter()
    table = run_scenario(dataclasses.replace(scenario_by_id("1b"), fit_methods=("bayes",)))
    elapsed = time.perf_counter() - start
    mm = table.methods["bayes"]
    ok = (
        abs(mm.mean["k"] - 0.606) < 0.05
        and abs(mm.mean["temporal_param"] - 2.471) < 0.2
        and mm.failures == 0
    )
    _verdict(
        capsys,
        "4/8 bayes-recovery",
        ok,
        f"k {mm.mean['k']:.4f} (0.606+-0.05), "
        f"alpha {mm.mean['temporal_param']:.4f} (2.471+-0.2), {elapsed:.0f}s",
    )


def test_5_grid_resolution_tightens_k(capsys):
    """SD of the k estimate must strictly shrink when the integration grid
    is refined; the midpoint rule is unbiased here, so resolution buys
    variance, not a moving centre."""
    base = dataclasses.replace(scenario_by_id("1a"), fit_methods=("mle",))
    coarse = run_scenario(
        dataclasses.replace(base, mle_config=MleConfig(grid=GridSpec(10, 10, 10)))
    )
    fine = run_scenario(
        dataclasses.replace(base, mle_config=MleConfig(grid=GridSpec(35, 35, 35)))
    )
    sd10 = coarse.methods["mle"].sd["k"]
    sd35 = fine.methods["mle"].sd["k"]
    ok = (
        sd35 < sd10
        and coarse.methods["mle"].failures == 0
        and fine.methods["mle"].failures == 0
    )
    _verdict(
        capsys,
        "5/8 grid-sensitivity",
        ok,
        f"sd(k) {sd10:.4f} at 10^3 vs {sd35:.4f} at 35^3 (strict decrease)",
    )


def test_6_em_is_fastest_fitter(capsys):
    scenario = dataclasses.replace(
        scenario_by_id("1a"), reps=5, fit_methods=("em", "mle", "bayes")
    )
    table = run_scenario(scenario)
    em_s = table.methods["em"].mean_seconds
    mle_s = table.methods["mle"].mean_seconds
    bayes_s = table.methods["bayes"].mean_seconds
    ok = em_s < mle_s and em_s < bayes_s
    _verdict(
        capsys,
        "6/8 timing-order",
        ok,
        f"mean fit seconds em {em_s:.2f} vs mle {mle_s:.2f} vs bayes {bayes_s:.2f}",
    )


def _check_attribution_row_sums() -> str | None:
    """Parent-attribution rows are probability distributions: 1000 random
    pattern/parameter draws, row sums within 1e-12 of one."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(3, 40))
        data = EventSequence(
            rng.uniform(0.0, 1.0, n),
            rng.uniform(0.0, 1.0, n),
            np.sort(rng.uniform(0.0, 10.0, n)),
        )
        t_kind, s_kind = KIND_COMBOS[trial % 4]
        params = ParameterVector(
            mu=float(rng.uniform(0.1, 5.0)),
            k=float(rng.uniform(0.0, 0.95)),
            temporal_param=float(rng.uniform(1.2, 5.0))
            if t_kind == "powerlaw"
            else float(rng.uniform(0.2, 5.0)),
            spatial_param=float(rng.uniform(0.01, 0.3)),
        )
        probs = e_step(params, t_kind, s_kind, data)
        worst = max(worst, float(np.abs(probs.row_sums - 1.0).max()))
    if worst > 1e-12:
        return f"max row-sum deviation {worst:.3e} exceeds 1e-12"
    return None


def _check_m_step_against_golden_section() -> str | None:
    """Closed-form trigger updates vs a golden-section maximiser of the
    weighted log-density sums, all four kind combinations, 1e-6."""
    rng = np.random.default_rng(11)
    window = Window(0.0, 1.0, 0.0, 1.0, 0.0, 5.0)
    for t_kind, s_kind in KIND_COMBOS:
        n = 25
        data = EventSequence(
            rng.uniform(0.0, 1.0, n),
            rng.uniform(0.0, 1.0, n),
            np.sort(rng.uniform(0.0, 5.0, n)),
        )
        params = ParameterVector(2.0, 0.7, 3.0 if t_kind == "powerlaw" else 1.5, 0.05)
        probs = e_step(params, t_kind, s_kind, data)
        est = m_step(probs, data, window, t_kind, s_kind)

        w = probs.p.copy()
        np.fill_diagonal(w, 0.0)
        dt = np.maximum(data.t[:, None] - data.t[None, :], 0.0)
        r2 = (data.x[:, None] - data.x[None, :]) ** 2 + (data.y[:, None] - data.y[None, :]) ** 2

        def neg_temporal(theta, t_kind=t_kind, w=w, dt=dt):
            if theta <= (1.0 if t_kind == "powerlaw" else 0.0):
                return math.inf
            g = TemporalTrigger(t_kind, float(theta)).density(dt)
            with np.errstate(divide="ignore"):  # log(0) = -inf rejects underflowed probes
                return -float((w * np.log(np.where(w > 0, g, 1.0))).sum())

        def neg_spatial(theta, s_kind=s_kind, w=w, r2=r2):
            if theta <= 0:
                return math.inf
            g = SpatialTrigger(s_kind, float(theta)).density_sq(r2)
            with np.errstate(divide="ignore"):
                return -float((w * np.log(np.where(w > 0, g, 1.0))).sum())

        t_num = minimize_scalar(
            neg_temporal,
            bracket=(0.5 * est.temporal_param, est.temporal_param, 1.5 * est.temporal_param),
            method="golden",
            options={"xtol": 1e-11},
        ).x
        s_num = minimize_scalar(
            neg_spatial,
            bracket=(0.5 * est.spatial_param, est.spatial_param, 1.5 * est.spatial_param),
            method="golden",
            options={"xtol": 1e-11},
        ).x
        if abs(t_num - est.temporal_param) > 1e-6 * max(1.0, abs(t_num)):
            return f"{t_kind} temporal update {est.temporal_param!r} vs numeric {t_num!r}"
        if abs(s_num - est.spatial_param) > 1e-6 * max(1.0, abs(s_num)):
            return f"{s_kind} spatial update {est.spatial_param!r} vs numeric {s_num!r}"
    return None


def _check_trigger_normalisation() -> str | None:
    """Temporal densities integrate to 1 over lag (rel err 1e-6), spatial
    kernels over the plane in polar form (rel err 1e-4)."""
    for kind, param in [("exponential", 2.5), ("exponential", 0.7), ("powerlaw", 3.5), ("powerlaw", 1.8)]:
        trig = TemporalTrigger(kind, param)
        total, _ = quad(lambda u, trig=trig: float(trig.density(u)), 0.0, np.inf, limit=200)
        if abs(total - 1.0) > 1e-6:
            return f"temporal {kind}({param}) integrates to {total!r}"
    for kind, param in [("gaussian", 0.05), ("gaussian", 0.3), ("exponential", 0.02), ("exponential", 0.1)]:
        trig = SpatialTrigger(kind, param)
        # radial integral in units of the kernel scale so quad sees an
        # order-one integrand regardless of param
        total, _ = quad(
            lambda s, trig=trig, p=param: 2.0 * math.pi * (p * s) * float(trig.density_sq((p * s) ** 2)) * p,
            0.0,
            np.inf,
            limit=200,
        )
        if abs(total - 1.0) > 1e-4:
            return f"spatial {kind}({param}) integrates to {total!r}"
    return None


def _check_full_coverage_binned_mass() -> str | None:
    """Bins out to a huge horizon and bands past the window diameter with
    unit weights must charge exactly k, to 1e-9."""
    event = Event(0.35, 0.6, 2.0)
    bins = np.array([2.0, 2.5, 3.0, 5.0, 1e9])
    radii = np.array([0.05, 0.1, 0.4, 1e6])
    weights = np.ones(radii.size)
    for t_kind, t_param in [("exponential", 1.7), ("powerlaw", 3.2)]:
        for s_kind, s_param in [("gaussian", 0.07), ("exponential", 0.02)]:
            params = ParameterVector(2.0, 0.73, t_param, s_param)
            mass = binned_trigger_mass(params, t_kind, s_kind, event, bins, radii, weights)
            if abs(mass - 0.73) > 1e-9:
                return f"{t_kind}/{s_kind} full-coverage mass {mass!r} vs k=0.73"
    return None


def _check_poisson_boundary_objectives() -> str | None:
    """At mu = n/|W| and k = 0 every fitter's objective must equal the
    homogeneous-Poisson log-likelihood n log(mu) - mu |W|, to 1e-9."""
    rng = np.random.default_rng(23)
    window = Window(0.0, 1.0, 0.0, 1.0, 0.0, 50.0)
    n = 400
    data = EventSequence.from_unsorted(
        rng.uniform(0.0, 1.0, n), rng.uniform(0.0, 1.0, n), rng.uniform(0.0, 50.0, n)
    )
    mu0 = n / window.volume
    closed = n * math.log(mu0) - mu0 * window.volume

    model = HawkesModel(
        background=ConstantBackground(mu0),
        k=0.0,
        temporal=TemporalTrigger("exponential", 1.0),
        spatial=SpatialTrigger("gaussian", 0.05),
    )
    grid_val = log_likelihood(model, data, window)
    if abs(grid_val - closed) > 1e-9:
        return f"grid objective {grid_val!r} vs closed form {closed!r}"

    em_res = fit_em(
        data,
        window,
        config=EmConfig(initial=ParameterVector(1.0, 0.0, 1.0, 0.05)),
    )
    if em_res.estimate.k != 0.0:
        return f"EM left the k=0 boundary: {em_res.estimate!r}"
    if abs(em_res.objective - closed) > 1e-9:
        return f"EM objective {em_res.objective!r} vs closed form {closed!r}"

    binned_val = binned_log_likelihood(
        ParameterVector(mu0, 0.0, 1.0, 0.05),
        data,
        window,
        TemporalBinning(),
        SpatialBanding(),
    )
    if abs(binned_val - closed) > 1e-9:
        return f"binned objective {binned_val!r} vs closed form {closed!r}"
    return None


def _check_linearize_gradient() -> str | None:
    """Linearisation gradient vs the analytic gradient of random
    log-intensity-shaped functions, 100 draws, 1e-4 relative."""
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(1.0, 3.0, size=6)
        c = rng.uniform(0.5, 2.0, size=(6, 4))
        comp = rng.uniform(0.0, 0.1, size=4)
        theta0 = rng.uniform(0.5, 2.0, size=4)

        def f(theta, a=a, c=c, comp=comp):
            return float(a @ np.log(c @ theta) - comp @ theta)

        lin = linearize(f, theta0)
        grad_true = (a / (c @ theta0)) @ c - comp
        rel = np.abs(lin.gradient - grad_true) / np.abs(grad_true)
        worst = max(worst, float(rel.max()))
    if worst > 1e-4:
        return f"worst relative gradient error {worst:.2e}"
    return None


def _check_simulation_determinism(tmp_path) -> str | None:
    """Identical seeds must produce byte-identical event CSVs for both
    simulators."""
    model = HawkesModel(
        background=ConstantBackground(3.0),
        k=0.6,
        temporal=TemporalTrigger("exponential", 1.5),
        spatial=SpatialTrigger("gaussian", 0.04),
    )
    window = Window(0.0, 1.0, 0.0, 1.0, 0.0, 30.0)
    for method in ("parents-offspring", "thinning"):
        payloads = []
        for tag in ("first", "second"):
            result = simulate(model, window, SimConfig(seed=424242, method=method))
            path = tmp_path / f"{method}-{tag}.csv"
            write_events_csv(path, result.events)
            payloads.append(path.read_bytes())
        if len(result.events) == 0:
            return f"{method} produced no events"
        if payloads[0] != payloads[1]:
            return f"{method} outputs differ across identical seeded runs"
    return None


def test_7_property_pack(capsys, tmp_path):
    checks = [
        ("attribution-row-sums", _check_attribution_row_sums),
        ("m-step-vs-golden-section", _check_m_step_against_golden_section),
        ("trigger-normalisation", _check_trigger_normalisation),
        ("full-coverage-binned-mass", _check_full_coverage_binned_mass),
        ("poisson-boundary-objectives", _check_poisson_boundary_objectives),
        ("linearise-gradient", _check_linearize_gradient),
        ("simulation-determinism", lambda: _check_simulation_determinism(tmp_path)),
    ]
    failures = []
    for name, check in checks:
        error = check()
        if error:
            failures.append(f"{name}: {error}")
    ok = not failures
    detail = f"{len(checks) - len(failures)}/{len(checks)} sub-checks clean"
    if failures:
        detail += "; " + "; ".join(failures)
    _verdict(capsys, "7/8 properties", ok, detail)


def test_8_extended_inhomogeneous_case(capsys):
    """Trigger recovery when the background shape itself is estimated from
    each replication by kernel density."""
    start = time.perf_counter()
    table = run_scenario(scenario_by_id("extended"))
    elapsed = time.perf_counter() - start
    mm = table.methods["em"]
    ok = (
        abs(mm.mean["k"] - 0.763) < 0.06
        and abs(mm.mean["spatial_param"] - 0.010) < 0.001
        and mm.failures == 0
        and elapsed < 1200.0
    )
    _verdict(
        capsys,
        "8/8 extended-case",
        ok,
        f"k {mm.mean['k']:.4f} (0.763+-0.06), "
        f"sigma {mm.mean['spatial_param']:.5f} (0.010+-0.001), {elapsed:.0f}s of 1200s",
    )
