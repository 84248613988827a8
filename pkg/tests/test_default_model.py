import math

import numpy as np
import pytest

from erratic2bsde.default_model import (IntensityModel, DefaultSample,
                                        cumulative_hazard, sample_default,
                                        sample_defaults,
                                        survival_probability)


def test_constant_hazard_is_linear():
    m = IntensityModel.constant(0.7)
    assert cumulative_hazard(m, None, 2.0) == pytest.approx(1.4)
    assert survival_probability(m, None, 1.0) == pytest.approx(math.exp(-0.7))


def test_piecewise_hazard_exact():
    m = IntensityModel.piecewise([0.0, 0.5], [1.0, 3.0])
    # int_0^1 = 0.5*1 + 0.5*3
    assert cumulative_hazard(m, None, 1.0) == pytest.approx(2.0)
    assert cumulative_hazard(m, None, 0.25) == pytest.approx(0.25)
    assert cumulative_hazard(m, None, 0.5) == pytest.approx(0.5)


def test_state_functional_uses_path_and_clips_at_cap():
    m = IntensityModel.state_functional(lambda t, x: 10.0 * np.asarray(x),
                                        cap=2.0)
    times = np.linspace(0.0, 1.0, 101)
    values = np.ones_like(times)
    # rate clipped to 2 everywhere
    assert cumulative_hazard(m, (times, values), 1.0) == pytest.approx(2.0)


def test_constant_rate_validation():
    with pytest.raises(ValueError):
        IntensityModel.constant(-1.0)
    with pytest.raises(ValueError):
        IntensityModel.constant(5.0, cap=1.0)
    with pytest.raises(ValueError):
        IntensityModel.piecewise([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        IntensityModel(kind="weird")


def test_rate_at_piecewise_lookup():
    m = IntensityModel.piecewise([0.0, 1.0], [0.5, 2.0])
    assert m.rate_at(0.3) == pytest.approx(0.5)
    assert m.rate_at(1.7) == pytest.approx(2.0)
    out = m.rate_at(np.array([0.0, 1.5]))
    assert np.allclose(out, [0.5, 2.0])


def test_sampling_matches_survival_probability():
    m = IntensityModel.constant(1.0)
    rng = np.random.default_rng(123)
    taus = sample_defaults(m, None, 1.0, 50000, rng)
    p_emp = float(np.mean(np.isfinite(taus)))
    p_true = 1.0 - math.exp(-1.0)
    se = math.sqrt(p_true * (1 - p_true) / 50000)
    assert abs(p_emp - p_true) < 4 * se


def test_sampling_zero_rate_never_defaults():
    m = IntensityModel.constant(0.0)
    taus = sample_defaults(m, None, 5.0, 100, np.random.default_rng(0))
    assert np.all(np.isinf(taus))


def test_piecewise_sampling_inversion():
    m = IntensityModel.piecewise([0.0, 0.5], [0.0, 2.0])
    # no hazard before 0.5, so no default can land there
    taus = sample_defaults(m, None, 1.0, 5000, np.random.default_rng(1))
    finite = taus[np.isfinite(taus)]
    assert finite.size > 0
    assert np.all(finite >= 0.5)
    # P(tau <= 1) = 1 - exp(-1)
    p_emp = finite.size / 5000
    assert abs(p_emp - (1 - math.exp(-1.0))) < 0.03


def test_sample_default_single():
    m = IntensityModel.constant(2.0)
    s = sample_default(m, None, 10.0, np.random.default_rng(5))
    assert isinstance(s, DefaultSample)
    assert s.occurred_before == (s.tau <= 10.0)


def test_state_sampling_per_path():
    m = IntensityModel.state_functional(lambda t, x: np.full(np.shape(x), 1.0))
    times = np.linspace(0.0, 1.0, 51)
    values = np.ones((200, 51))
    taus = sample_defaults(m, (times, values), 1.0, 200,
                           np.random.default_rng(2))
    assert taus.shape == (200,)
    finite = taus[np.isfinite(taus)]
    assert np.all((finite > 0) & (finite <= 1.0))
