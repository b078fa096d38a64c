"""Spatio-temporal self-exciting (Hawkes) point processes: simulation by
cluster and thinning algorithms, fitting by grid MLE, EM on the branching
structure, and binned-likelihood Bayesian inference."""

__version__ = "0.1.0"

from .background import (
    SpatialField,
    TemporalField,
    estimate_spatial_background,
    estimate_temporal_background,
    lscv_bandwidth,
    silverman_bandwidth,
)
from .bayes import (
    BayesConfig,
    LinearizedFunction,
    LogNormalPrior,
    PosteriorSummary,
    PriorSpec,
    SpatialBanding,
    TemporalBinning,
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
from .bench import (
    MetricsTable,
    Scenario,
    builtin_scenarios,
    compute_mae,
    run_scenario,
    scenario_by_id,
)
from .em import BranchingProbabilities, EmConfig, e_step, fit_em, m_step
from .io import (
    read_events_csv,
    read_model_json,
    write_events_csv,
    write_model_json,
)
from .likelihood import (
    GridSpec,
    MleConfig,
    approximate_integral,
    fit_mle,
    log_likelihood,
)
from .model import (
    ConstantBackground,
    Event,
    EventSequence,
    FitResult,
    GmmBetaBackground,
    HawkesModel,
    ParameterVector,
    SeparableBackground,
    SpatialTrigger,
    TemporalTrigger,
    Window,
    conditional_intensity,
    make_triggers,
)
from .simulate import (
    SimConfig,
    SimResult,
    estimate_lambda_max,
    simulate,
    simulate_parents_offspring,
    simulate_thinning,
)

__all__ = [
    "BayesConfig",
    "BranchingProbabilities",
    "ConstantBackground",
    "EmConfig",
    "Event",
    "EventSequence",
    "FitResult",
    "GmmBetaBackground",
    "GridSpec",
    "HawkesModel",
    "LinearizedFunction",
    "LogNormalPrior",
    "MetricsTable",
    "MleConfig",
    "ParameterVector",
    "PosteriorSummary",
    "PriorSpec",
    "Scenario",
    "SeparableBackground",
    "SimConfig",
    "SimResult",
    "SpatialBanding",
    "SpatialField",
    "SpatialTrigger",
    "TemporalBinning",
    "TemporalField",
    "TemporalTrigger",
    "Window",
    "approximate_integral",
    "band_weights",
    "binned_log_likelihood",
    "binned_trigger_mass",
    "build_spatial_bands",
    "build_temporal_bins",
    "builtin_scenarios",
    "compute_mae",
    "conditional_intensity",
    "covering_radius",
    "e_step",
    "estimate_lambda_max",
    "estimate_spatial_background",
    "estimate_temporal_background",
    "fit_bayes",
    "fit_em",
    "fit_mle",
    "linearize",
    "log_likelihood",
    "lscv_bandwidth",
    "m_step",
    "make_triggers",
    "read_events_csv",
    "read_model_json",
    "run_metropolis",
    "run_scenario",
    "scenario_by_id",
    "silverman_bandwidth",
    "simulate",
    "simulate_parents_offspring",
    "simulate_thinning",
    "write_events_csv",
    "write_model_json",
]
