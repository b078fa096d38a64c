import numpy as np
import pytest

from sthawkes import (
    ConstantBackground,
    HawkesModel,
    SimConfig,
    SpatialTrigger,
    TemporalTrigger,
    Window,
    simulate,
)


@pytest.fixture(scope="session")
def unit_window():
    return Window(0.0, 1.0, 0.0, 1.0, 0.0, 100.0)


@pytest.fixture(scope="session")
def short_window():
    return Window(0.0, 1.0, 0.0, 1.0, 0.0, 30.0)


def model_1a():
    return HawkesModel(
        ConstantBackground(2.0), 0.85, TemporalTrigger("exponential", 1.0), SpatialTrigger("gaussian", 0.05)
    )


def model_1b():
    return HawkesModel(
        ConstantBackground(4.0), 0.6, TemporalTrigger("exponential", 2.5), SpatialTrigger("gaussian", 0.03)
    )


@pytest.fixture(scope="session")
def pattern_1b(short_window):
    """One moderate pattern (a few hundred events) reused by fitter tests."""
    return simulate(model_1b(), short_window, SimConfig(seed=901)).events


@pytest.fixture(scope="session")
def pattern_1a(unit_window):
    return simulate(model_1a(), unit_window, SimConfig(seed=902)).events


def random_pattern(rng, n, window):
    """Unordered uniform points, sorted on construction."""
    from sthawkes import EventSequence

    x = rng.uniform(window.x_min, window.x_max, n)
    y = rng.uniform(window.y_min, window.y_max, n)
    t = np.sort(rng.uniform(window.t_min, window.t_max, n))
    return EventSequence(x, y, t)
