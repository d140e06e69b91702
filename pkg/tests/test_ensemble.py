import warnings

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cabxde.ensemble import (
    ReciprocalWeights,
    StackingModel,
    fit_stacking,
    reciprocal_weights,
    stack_predict,
    weighted_combine,
)
from cabxde.errors import DataError, NumericalError

errors = st.floats(0.0, 1e6, allow_nan=False)


def test_weights_from_reported_errors():
    for k in (1.0, 0.01, 37.0):
        w = reciprocal_weights(0.5748 * k, 0.4252 * k)
        assert abs(w.w_bl - 0.4252) < 1e-12
        assert abs(w.w_xg - 0.5748) < 1e-12


def test_equal_errors_split_evenly():
    assert reciprocal_weights(0.3, 0.3) == ReciprocalWeights(0.5, 0.5)


def test_zero_error_model_takes_all_weight():
    w = reciprocal_weights(0.2, 0.0)
    assert (w.w_bl, w.w_xg) == (0.0, 1.0)


def test_both_zero_is_degenerate():
    with pytest.warns(RuntimeWarning):
        w = reciprocal_weights(0.0, 0.0)
    assert w.degenerate and (w.w_bl, w.w_xg) == (0.5, 0.5)


def test_negative_error_rejected():
    with pytest.raises(DataError):
        reciprocal_weights(-0.1, 0.2)


@given(errors, errors)
def test_weights_sum_to_one(a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = reciprocal_weights(a, b)
    assert abs(w.w_bl + w.w_xg - 1.0) < 1e-12
    assert 0.0 <= w.w_bl <= 1.0 and 0.0 <= w.w_xg <= 1.0
    if a < b:
        assert w.w_bl >= w.w_xg


def test_weighted_combine_hand_value():
    w = reciprocal_weights(0.5748, 0.4252)
    out = weighted_combine([10.0], [20.0], w)
    # 0.4252 * 10 + 0.5748 * 20
    npt.assert_allclose(out, [15.748], rtol=1e-12)


@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=20), errors, errors)
def test_combination_is_convex(pairs, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = reciprocal_weights(a, b)
    p_bl, p_xg = np.array(pairs).T
    out = weighted_combine(p_bl, p_xg, w)
    lo, hi = np.minimum(p_bl, p_xg), np.maximum(p_bl, p_xg)
    slack = 1e-12 * np.maximum(1.0, np.abs(hi))
    assert np.all(out >= lo - slack) and np.all(out <= hi + slack)


def test_length_mismatch():
    with pytest.raises(DataError):
        weighted_combine([1.0, 2.0], [1.0], ReciprocalWeights(0.5, 0.5))
    with pytest.raises(DataError):
        fit_stacking([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0])


def test_stacking_recovers_exact_predictor():
    r = np.random.default_rng(0)
    p_bl = r.normal(100, 10, 50)
    p_xg = r.normal(100, 10, 50)
    m = fit_stacking(p_bl, p_xg, p_bl)
    assert abs(m.intercept) < 1e-8
    assert abs(m.coef_bl - 1.0) < 1e-8
    assert abs(m.coef_xg) < 1e-8


def test_stacking_constant_target():
    r = np.random.default_rng(1)
    p_bl, p_xg = r.normal(size=30), r.normal(size=30)
    m = fit_stacking(p_bl, p_xg, np.full(30, 4.0))
    npt.assert_allclose(stack_predict(m, p_bl, p_xg), 4.0, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_stacking_matches_independent_least_squares(seed):
    r = np.random.default_rng(seed)
    p_bl, p_xg = r.normal(size=20), r.normal(size=20)
    y = 0.3 + 1.7 * p_bl - 0.4 * p_xg + r.normal(scale=0.2, size=20)
    design = np.column_stack([np.ones(20), p_bl, p_xg])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    m = fit_stacking(p_bl, p_xg, y)
    npt.assert_allclose([m.intercept, m.coef_bl, m.coef_xg], beta, rtol=1e-10, atol=1e-12)


def test_stacking_price_level_inputs():
    # base forecasts near a large level are nearly collinear with the constant
    r = np.random.default_rng(7)
    truth = 30_000 + np.cumsum(r.normal(0, 100, 200))
    p_bl = truth + r.normal(0, 80, 200)
    p_xg = truth + r.normal(0, 50, 200)
    design = np.column_stack([np.ones(200), p_bl, p_xg])
    beta, *_ = np.linalg.lstsq(design, truth, rcond=None)
    m = fit_stacking(p_bl, p_xg, truth)
    npt.assert_allclose(stack_predict(m, p_bl, p_xg), design @ beta, rtol=1e-12)


@given(st.integers(0, 100_000), st.integers(3, 60))
def test_stacking_dominates_each_input(seed, n):
    r = np.random.default_rng(seed)
    y = r.normal(50, 5, n)
    p_bl = y + r.normal(r.normal(), r.uniform(0.1, 3), n)
    p_xg = 0.8 * y + r.normal(0, r.uniform(0.1, 3), n)
    m = fit_stacking(p_bl, p_xg, y)
    mse = lambda p: float(np.mean((y - p) ** 2))  # noqa: E731
    assert mse(m.predict(p_bl, p_xg)) <= min(mse(p_bl), mse(p_xg)) + 1e-10


def test_zero_coefficients_give_intercept():
    npt.assert_array_equal(StackingModel(2.5, 0.0, 0.0).predict([1.0, 9.0], [3.0, 4.0]), [2.5, 2.5])


def test_stacking_too_few_samples():
    with pytest.raises(DataError):
        fit_stacking([1.0, 2.0], [2.0, 1.0], [1.0, 1.0])


def test_stacking_collinear_inputs_fall_back_or_fail_loudly():
    x = np.arange(10.0)
    try:
        m = fit_stacking(x, x, 2 * x + 1)
    except NumericalError:
        return
    npt.assert_allclose(m.predict(x, x), 2 * x + 1, atol=1e-6)
