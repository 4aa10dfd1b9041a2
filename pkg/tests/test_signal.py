import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agentic_backtest.errors import DataError, ParameterError, SchemaError
from agentic_backtest.features import compute_raw_features
from agentic_backtest.signal import (PriceActionComponents, Regime, blend, build_signal, classify_regime,
                                     classify_regimes, classify_values, components_from_values, price_action,
                                     regime_mix, standardize_predictions, w_model)
from conftest import make_series

ZERO = PriceActionComponents(0.0, 0.0, 0.0, 0.0, 0.0)


def test_flat_inputs_give_zero_components():
    f = compute_raw_features(make_series(np.full(300, 10.0)))
    assert price_action(f, 299) == ZERO


def test_momentum_weights():
    m, *_ = components_from_values(0.01, 0.01, 0.01, 0, 0, 0, 0, 0, 0)
    assert m == pytest.approx(0.1, abs=1e-15)


def test_breakout_component():
    c = np.r_[np.full(280, 10.0), np.linspace(10, 10.2, 20)]
    c[-1] = 11.0
    f = compute_raw_features(make_series(c))
    assert price_action(f, 299).breakout == 3.0
    c2 = c.copy()
    c2[-1] = 9.0
    assert price_action(compute_raw_features(make_series(c2)), 299).breakout == -3.0


def test_missing_column_is_schema_error(walk300):
    f = compute_raw_features(walk300).select(["mom_1"])
    with pytest.raises(SchemaError):
        price_action(f, 299)


@pytest.mark.parametrize("q,w", [(0.0, 0.10), (0.04, 0.10), (0.05, 0.20), (0.0999, 0.20), (0.10, 0.40), (3.0, 0.40)])
def test_w_model_table(q, w):
    assert w_model(q) == w


def test_w_model_negative():
    with pytest.raises(ParameterError):
        w_model(-0.01)


@given(st.floats(0, 10), st.floats(0, 10))
def test_w_model_monotone_step(a, b):
    lo, hi = sorted((a, b))
    assert w_model(lo) <= w_model(hi)
    assert w_model(a) in (0.10, 0.20, 0.40)


def test_regime_examples():
    assert classify_values(0.8, 0.002, 0, 1.0) is Regime.STRONG_TREND
    assert classify_values(0.5, 0.0003, 0, 1.3) is Regime.SIDEWAYS
    assert classify_values(0.5, 0.0008, 0, 1.6) is Regime.HIGH_VOL
    assert classify_values(0.5, 0.0008, 3, 1.6) is Regime.BREAKOUT
    assert classify_values(0.5, 0.0008, 0, 1.0) is Regime.MIXED


def test_regime_total_and_deterministic(walk300):
    f = compute_raw_features(walk300)
    a, b = classify_regimes(f), classify_regimes(f)
    assert list(a[240:]) == list(b[240:])
    assert all(isinstance(r, Regime) for r in a[240:])
    assert classify_regime(f, 299) is a[299]


def test_regime_mix_examples():
    c = PriceActionComponents(1.0, 0.0, 0.0, 1.0, 0.0)
    assert regime_mix(c, Regime.MIXED) == pytest.approx(1.0)
    assert regime_mix(PriceActionComponents(0, 0, 3.0, 0, 0.5), Regime.BREAKOUT) == 6.5
    assert regime_mix(c, Regime.STRONG_TREND) == 3.0
    assert regime_mix(PriceActionComponents(1.0, 2.0, 0, 0, 0), Regime.SIDEWAYS) == pytest.approx(3.4)
    for r in Regime:
        assert regime_mix(ZERO, r) == 0.0


def test_blend_examples():
    assert blend(0.0, 0.0, 2.0) == pytest.approx(1.8)
    assert blend(1.5, 0.2, 0.0) == pytest.approx(0.6)
    assert blend(0.0, 0.0, 0.0) == 0.0
    with pytest.raises(DataError):
        blend(math.nan, 0.2, 0.0)


@settings(max_examples=50)
@given(st.sampled_from([0.01, 0.07, 0.5]), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_blend_linear_within_branch(q, z, p, k):
    assert blend(z + k, q, p) - blend(z, q, p) == pytest.approx(w_model(q) * k, abs=1e-9)
    assert blend(z, q, p + k) - blend(z, q, p) == pytest.approx((1 - w_model(q)) * k, abs=1e-9)


def test_standardize_uses_past_only():
    preds = np.random.default_rng(0).normal(size=50)
    z, sigma = standardize_predictions(preds, window=10)
    z2, _ = standardize_predictions(preds[:30], window=10)
    assert np.array_equal(z[:30], z2)
    t = 20
    assert sigma[t] == pytest.approx(np.std(preds[t - 10:t]), rel=1e-12)
    assert z[t] == pytest.approx(preds[t] / sigma[t], rel=1e-12)
    assert z[0] == 0.0 and np.isnan(sigma[0])


def test_build_signal_consistency(walk300):
    f = compute_raw_features(walk300)
    rows = np.arange(240, 300)
    preds = np.random.default_rng(1).normal(0, 1e-4, len(rows))
    tr = build_signal(f, rows, preds)
    for i in range(len(rows)):
        assert tr.model_weight[i] == w_model(tr.quality[i])
        assert tr.raw[i] == pytest.approx(blend(tr.standardized[i], tr.quality[i], tr.price_action[i]))
    with pytest.raises(DataError):
        build_signal(f, rows, np.full(len(rows), np.nan))
