import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cabxde.errors import ConfigError, DataError, ShapeError
from cabxde.gbdt import (
    BoostedModel,
    GbdtConfig,
    TreeNode,
    build_tree,
    fit,
    grad_hess_squared_error,
    leaf_weight,
    predict,
    regularized_objective,
    soft_threshold,
    split_gain,
)


def brute_force_root_gain(X, g, h, lam, gamma):
    """Loop over every (feature, midpoint) pair and score the partition."""
    best = -math.inf
    n, d = X.shape
    G, H = math.fsum(g), math.fsum(h)
    for j in range(d):
        values = sorted(set(X[:, j].tolist()))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = [i for i in range(n) if X[i, j] < thr]
            right = [i for i in range(n) if X[i, j] >= thr]
            GL, HL = math.fsum(g[left]), math.fsum(h[left])
            GR, HR = math.fsum(g[right]), math.fsum(h[right])
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - gamma
            best = max(best, gain)
    return best


def test_grad_hess():
    gh = grad_hess_squared_error([3.0, 0.0], [3.0, 10.0])
    npt.assert_array_equal(gh.g, [0.0, -10.0])
    npt.assert_array_equal(gh.h, [1.0, 1.0])


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-10, 10))
def test_grad_linear_in_pred(pred, target, delta):
    a = grad_hess_squared_error(pred + delta, target).g
    b = grad_hess_squared_error(pred, target).g
    assert abs((a - b) - delta) <= 1e-9 * max(1.0, abs(pred), abs(target))


def test_leaf_weight_examples():
    assert leaf_weight(-10.0, 1.0, 1.0) == 5.0
    assert leaf_weight(-6.0, 3.0, 0.0) == 2.0
    assert leaf_weight(7.5, 1.0, 1.0, alpha=10.0) == 0.0
    assert leaf_weight(-15.0, 4.0, 1.0, alpha=10.0) == 1.0
    with pytest.raises(ZeroDivisionError):
        leaf_weight(1.0, 0.0, 0.0)


def test_soft_threshold():
    assert [soft_threshold(v, 2.0) for v in (5.0, -5.0, 1.5, -2.0)] == [3.0, -3.0, 0.0, 0.0]


def test_split_gain_examples():
    assert split_gain(-10.0, 5.0, 10.0, 5.0, 0.0, 0.0) == 20.0
    assert split_gain(-10.0, 5.0, 10.0, 5.0, 0.0, 2.0) == 18.0
    # symmetric halves collapse the bracket
    assert split_gain(3.0, 2.0, 3.0, 2.0, 0.0, 1.5) == pytest.approx(-1.5, abs=1e-15)


def test_two_sample_split_is_exact():
    X = np.array([[1.0], [3.0]])
    y = np.array([4.0, 10.0])
    cfg = GbdtConfig(reg_lambda=0.0, alpha=0.0, gamma=0.0, max_depth=3)
    tree = build_tree(X, grad_hess_squared_error(np.zeros(2), y), cfg)
    assert not tree.is_leaf
    assert (tree.feature, tree.threshold) == (0, 2.0)
    assert tree.left.weight == 4.0 and tree.right.weight == 10.0


def test_equal_targets_single_leaf():
    X = np.random.default_rng(0).random((10, 2))
    cfg = GbdtConfig(reg_lambda=0.0, alpha=0.0, gamma=0.0)
    tree = build_tree(X, grad_hess_squared_error(np.zeros(10), np.full(10, 3.0)), cfg)
    assert tree.is_leaf and tree.weight == 3.0


@pytest.mark.parametrize("seed", range(25))
def test_root_split_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    n, d = r.integers(2, 65), r.integers(1, 5)
    X = np.round(r.normal(size=(n, d)), 1)  # rounding creates ties
    y = r.normal(size=n) * 5
    lam, gamma = float(r.uniform(0, 2)), float(r.uniform(0, 1))
    gh = grad_hess_squared_error(np.zeros(n), y)
    cfg = GbdtConfig(reg_lambda=lam, gamma=gamma, alpha=0.0, max_depth=1)
    oracle = brute_force_root_gain(X, gh.g, gh.h, lam, gamma)
    tree = build_tree(X, gh, cfg)
    if oracle > 0:
        assert not tree.is_leaf
        assert tree.gain == pytest.approx(oracle, rel=1e-12, abs=1e-12)
    else:
        assert tree.is_leaf


def collect_internal(node):
    if node.is_leaf:
        return []
    return [node] + collect_internal(node.left) + collect_internal(node.right)


def test_realized_split_gain_positive_and_partition():
    r = np.random.default_rng(3)
    X = r.normal(size=(120, 3))
    y = 10 * np.sin(X[:, 0]) + X[:, 1] ** 2
    cfg = GbdtConfig(reg_lambda=1.0, alpha=0.0, gamma=0.5, max_depth=5)
    gh = grad_hess_squared_error(np.zeros(120), y)
    tree = build_tree(X, gh, cfg)
    for node in collect_internal(tree):
        assert node.gain >= 0
        assert node.left.n_samples + node.right.n_samples == node.n_samples
    assert all(math.isfinite(leaf.weight) for leaf in tree.leaves())
    assert sum(leaf.n_samples for leaf in tree.leaves()) == 120


def test_single_leaf_model_predicts_mean():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    cfg = GbdtConfig(n_estimators=1, max_depth=0, eta=1.0, reg_lambda=0.0, alpha=0.0)
    m = fit(np.arange(4.0)[:, None], y, cfg)
    npt.assert_allclose(m.predict(np.array([[0.0], [10.0]])), 3.5, rtol=0, atol=1e-12)


def test_constant_targets_zero_weight_leaves():
    cfg = GbdtConfig(n_estimators=5, gamma=0.0)
    m = fit(np.random.default_rng(0).random((20, 3)), np.full(20, 2.5), cfg)
    for t in m.trees:
        assert t.is_leaf and t.weight == 0.0
    npt.assert_array_equal(m.predict(np.zeros((2, 3))), 2.5)


def test_step_function_training_mse_drops():
    X = np.arange(8.0)[:, None]
    y = np.where(X[:, 0] < 4, 0.0, 10.0)
    cfg = GbdtConfig(n_estimators=10, eta=0.5, alpha=0.0, gamma=0.0, max_depth=2)
    m = fit(X, y, cfg)
    mses = [h["train_mse"] for h in m.history]
    assert len(mses) == 10
    assert mses[-1] < mses[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 5.0))
def test_objective_never_increases(seed, lam, gamma, alpha):
    r = np.random.default_rng(seed)
    X = r.normal(size=(60, 3))
    y = 5 * X[:, 0] - X[:, 2] ** 2 + r.normal(size=60)
    cfg = GbdtConfig(n_estimators=20, max_depth=3, reg_lambda=lam, gamma=gamma, alpha=alpha)
    m = fit(X, y, cfg)
    objs = [regularized_objective(y, np.full(60, m.base_score), [], cfg)] + [h["objective"] for h in m.history]
    assert all(b <= a for a, b in zip(objs, objs[1:]))
    # the logged value is the objective of the returned model
    assert regularized_objective(y, m.predict(X), m.trees, cfg) == pytest.approx(objs[-1], rel=1e-12)


def three_tree_model():
    t1 = TreeNode(feature=0, threshold=0.5, left=TreeNode(weight=1.0), right=TreeNode(weight=-2.0))
    t2 = TreeNode(
        feature=1,
        threshold=0.0,
        left=TreeNode(weight=0.5),
        right=TreeNode(feature=0, threshold=2.0, left=TreeNode(weight=3.0), right=TreeNode(weight=4.0)),
    )
    t3 = TreeNode(weight=-1.0)
    return BoostedModel(10.0, 0.1, 2, [t1, t2, t3])


def manual_traverse(node, x):
    while not node.is_leaf:
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.weight


def test_predict_matches_manual_traversal():
    m = three_tree_model()
    X = np.random.default_rng(0).uniform(-1, 3, size=(50, 2))
    for x in X:
        expect = 10.0 + 0.1 * sum(manual_traverse(t, x) for t in m.trees)
        assert predict(m, x) == pytest.approx(expect, rel=1e-15)


def test_predict_zero_trees_and_single_leaf():
    assert predict(BoostedModel(7.0, 0.1, 2), [1.0, 2.0]) == 7.0
    m = BoostedModel(7.0, 0.1, 2, [TreeNode(weight=4.0)])
    assert predict(m, [1.0, 2.0]) == pytest.approx(7.4, abs=1e-15)


def test_predict_width_mismatch():
    with pytest.raises(ShapeError):
        predict(three_tree_model(), [1.0, 2.0, 3.0])


def test_shrinkage_proportionality():
    m = three_tree_model()
    X = np.random.default_rng(1).uniform(-1, 3, size=(30, 2))
    # zero base score keeps the tree sum free of cancellation
    single = BoostedModel(0.0, m.eta, 2, m.trees)
    doubled = BoostedModel(0.0, 2 * m.eta, 2, m.trees)
    npt.assert_allclose(doubled.predict(X), 2 * single.predict(X), rtol=1e-15)


def test_model_dict_round_trip():
    r = np.random.default_rng(4)
    X = r.normal(size=(80, 3))
    y = 50 * X[:, 0] + r.normal(size=80)
    m = fit(X, y, GbdtConfig(n_estimators=10, max_depth=3))
    again = BoostedModel.from_dict(m.to_dict())
    npt.assert_array_equal(again.predict(X), m.predict(X))


def test_subsampled_fit_is_seeded():
    r = np.random.default_rng(5)
    X = r.normal(size=(100, 3))
    y = 30 * X[:, 1] + r.normal(size=100)
    cfg = GbdtConfig(n_estimators=10, max_depth=3, subsample=0.5, seed=9)
    npt.assert_array_equal(fit(X, y, cfg).predict(X), fit(X, y, cfg).predict(X))


def test_fit_errors():
    with pytest.raises(DataError):
        fit(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ShapeError):
        fit(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ConfigError):
        fit(np.zeros((3, 2)), np.zeros(3), GbdtConfig(eta=0.0))
    with pytest.raises(ConfigError):
        fit(np.zeros((3, 2)), np.zeros(3), GbdtConfig(subsample=1.5))
