"""Second-order gradient-boosted regression trees, exact greedy splits.

Each round expands the squared-error loss to second order around the
current predictions, grows a tree whose leaves take the closed-form
regularised weight, and adds the tree scaled by the shrinkage ``eta``.
L1 regularisation (``alpha``) soft-thresholds the gradient sums.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError
from .ndcore import Rng


@dataclass
class GbdtConfig:
    n_estimators: int = 100
    max_depth: int = 8
    eta: float = 0.1
    reg_lambda: float = 1.0
    alpha: float = 10.0
    gamma: float = 2.0
    subsample: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_estimators < 0 or self.max_depth < 0:
            raise ConfigError("n_estimators and max_depth must be non-negative")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.reg_lambda < 0 or self.alpha < 0 or self.gamma < 0:
            raise ConfigError("lambda, alpha and gamma must be non-negative")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigError(f"subsample must lie in (0, 1], got {self.subsample}")
        return self


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray


def grad_hess_squared_error(pred, target) -> GradHess:
    """Derivatives of ``0.5 * (target - pred)**2`` with respect to ``pred``."""
    g = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return GradHess(g, np.ones_like(g))


def soft_threshold(G: float, alpha: float) -> float:
    if G > alpha:
        return G - alpha
    if G < -alpha:
        return G + alpha
    return 0.0


def leaf_weight(G: float, H: float, reg_lambda: float, alpha: float = 0.0) -> float:
    denom = H + reg_lambda
    if denom == 0:
        raise ZeroDivisionError("leaf weight undefined: H + lambda = 0")
    return -soft_threshold(G, alpha) / denom


def leaf_score(G: float, H: float, reg_lambda: float, alpha: float = 0.0) -> float:
    """``T(G)**2 / (H + lambda)``: twice the objective drop of an optimal leaf."""
    T = soft_threshold(G, alpha)
    return T * T / (H + reg_lambda)


def split_gain(G_L, H_L, G_R, H_R, reg_lambda, gamma, alpha: float = 0.0) -> float:
    return 0.5 * (
        leaf_score(G_L, H_L, reg_lambda, alpha)
        + leaf_score(G_R, H_R, reg_lambda, alpha)
        - leaf_score(G_L + G_R, H_L + H_R, reg_lambda, alpha)
    ) - gamma


@dataclass
class TreeNode:
    """Internal node when ``feature >= 0``; rows with ``x[feature] < threshold`` go left."""

    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    gain: float = 0.0
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        self._fill(X, np.arange(len(X)), out)
        return out

    def _fill(self, X, idx, out):
        if self.is_leaf:
            out[idx] = self.weight
            return
        go_left = X[idx, self.feature] < self.threshold
        self.left._fill(X, idx[go_left], out)
        self.right._fill(X, idx[~go_left], out)

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def to_list(self) -> list[dict]:
        """Pre-order node list."""
        if self.is_leaf:
            return [{"leaf": True, "weight": self.weight}]
        node = {"leaf": False, "feature": self.feature, "threshold": self.threshold, "gain": self.gain}
        return [node] + self.left.to_list() + self.right.to_list()

    @classmethod
    def from_list(cls, nodes: list[dict]) -> "TreeNode":
        it = iter(nodes)

        def build():
            d = next(it)
            if d["leaf"]:
                return cls(weight=float(d["weight"]))
            n = cls(feature=int(d["feature"]), threshold=float(d["threshold"]), gain=float(d.get("gain", 0.0)))
            n.left = build()
            n.right = build()
            return n

        root = build()
        if next(it, None) is not None:
            raise DataError("tree node list has trailing nodes")
        return root


def _exact_sum(a) -> float:
    return math.fsum(a)


@dataclass
class SplitCandidate:
    gain: float
    feature: int
    threshold: float


def best_split(X, g, h, reg_lambda, gamma, alpha=0.0) -> SplitCandidate | None:
    """Exhaustive scan over every feature and every midpoint between
    consecutive distinct sorted values. Ties go to the lowest feature,
    then the lowest threshold. Returns None when no split is possible.
    """
    n, d = X.shape
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    G_L = np.cumsum(g[order], axis=0)[:-1]
    H_L = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    G_R, H_R = G - G_L, H - H_L
    valid = Xs[1:] > Xs[:-1]
    if not valid.any():
        return None

    def score(Gs, Hs):
        T = np.sign(Gs) * np.maximum(np.abs(Gs) - alpha, 0.0)
        return T * T / (Hs + reg_lambda)

    with np.errstate(divide="ignore", invalid="ignore"):
        gains = 0.5 * (score(G_L, H_L) + score(G_R, H_R) - score(np.array(G), np.array(H))) - gamma
    gains = np.where(valid, gains, -np.inf)
    # feature-major flattening makes argmax pick lowest feature, then lowest threshold
    flat = gains.T.reshape(-1)
    k = int(np.argmax(flat))
    feature, pos = divmod(k, n - 1)
    lo, hi = Xs[pos, feature], Xs[pos + 1, feature]
    threshold = lo + (hi - lo) / 2.0
    if not lo < threshold <= hi:
        threshold = hi
    return SplitCandidate(float(flat[k]), int(feature), float(threshold))


def build_tree(X, gh: GradHess, config: GbdtConfig, depth_budget: int | None = None, idx=None) -> TreeNode:
    X = np.asarray(X, dtype=np.float64)
    if idx is None:
        idx = np.arange(len(X))
    if depth_budget is None:
        depth_budget = config.max_depth
    return _grow(X, gh.g, gh.h, idx, depth_budget, config)


def _grow(X, g, h, idx, depth_budget, cfg) -> TreeNode:
    gi, hi = g[idx], h[idx]
    G, H = _exact_sum(gi), _exact_sum(hi)
    leaf = TreeNode(weight=leaf_weight(G, H, cfg.reg_lambda, cfg.alpha), n_samples=len(idx))
    if depth_budget <= 0:
        return leaf
    cand = best_split(X[idx], gi, hi, cfg.reg_lambda, cfg.gamma, cfg.alpha)
    if cand is None:
        return leaf
    go_left = X[idx, cand.feature] < cand.threshold
    left_idx, right_idx = idx[go_left], idx[~go_left]
    # re-derive the gain from correctly rounded child sums
    gain = split_gain(
        _exact_sum(g[left_idx]), _exact_sum(h[left_idx]),
        _exact_sum(g[right_idx]), _exact_sum(h[right_idx]),
        cfg.reg_lambda, cfg.gamma, cfg.alpha,
    )
    if not gain > 0:
        return leaf
    node = TreeNode(feature=cand.feature, threshold=cand.threshold, gain=gain, n_samples=len(idx))
    node.left = _grow(X, g, h, left_idx, depth_budget - 1, cfg)
    node.right = _grow(X, g, h, right_idx, depth_budget - 1, cfg)
    return node


def tree_complexity(tree: TreeNode, config: GbdtConfig) -> float:
    """Penalty of the tree as added to the model, i.e. with eta-scaled leaves:
    ``gamma * L + 0.5 * lambda * sum(w**2) + alpha * sum(|w|)``.
    """
    ws = [config.eta * leaf.weight for leaf in tree.leaves()]
    return (
        config.gamma * len(ws)
        + 0.5 * config.reg_lambda * math.fsum(w * w for w in ws)
        + config.alpha * math.fsum(abs(w) for w in ws)
    )


def regularized_objective(y, pred, trees, config: GbdtConfig) -> float:
    """Sum of half squared errors plus every tree's complexity penalty."""
    r = np.asarray(y, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    return 0.5 * math.fsum(r * r) + math.fsum(tree_complexity(t, config) for t in trees)


@dataclass
class BoostedModel:
    base_score: float
    eta: float
    n_features: int
    trees: list[TreeNode] = field(default_factory=list)
    config: GbdtConfig | None = None
    history: list[dict] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected rows of width {self.n_features}, got {X.shape[1]}")
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out += self.eta * t.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "eta": self.eta,
            "n_features": self.n_features,
            "config": asdict(self.config) if self.config else None,
            "trees": [t.to_list() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        cfg = GbdtConfig(**d["config"]) if d.get("config") else None
        return cls(
            base_score=float(d["base_score"]),
            eta=float(d["eta"]),
            n_features=int(d["n_features"]),
            trees=[TreeNode.from_list(t) for t in d["trees"]],
            config=cfg,
        )


def predict(model: BoostedModel, feature_row) -> float | np.ndarray:
    row = np.asarray(feature_row, dtype=np.float64)
    out = model.predict(row)
    return float(out[0]) if row.ndim == 1 else out


def fit(X, y, config: GbdtConfig | None = None) -> BoostedModel:
    """Boost from ``base_score = mean(y)``.

    A round is kept only if it does not raise the regularised objective
    (loss plus every kept tree's penalty). With ``subsample == 1`` every
    later round would rebuild the same rejected tree, so boosting stops;
    with row subsampling the round is skipped instead.
    """
    config = (config or GbdtConfig()).validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("gbdt needs a non-empty (rows, features) matrix")
    if len(y) != len(X):
        raise ShapeError("feature rows and targets differ in length")
    n = len(y)
    model = BoostedModel(float(np.mean(y)), config.eta, X.shape[1], config=config)
    pred = np.full(n, model.base_score)
    objective = regularized_objective(y, pred, [], config)
    rng = Rng(config.seed, stream=2)
    n_sub = max(1, int(round(config.subsample * n)))
    penalty = 0.0
    for rnd in range(1, config.n_estimators + 1):
        gh = grad_hess_squared_error(pred, y)
        idx = np.arange(n) if n_sub == n else np.sort(rng.choice(n, n_sub, replace=False))
        tree = build_tree(X, gh, config, idx=idx)
        new_pred = pred + config.eta * tree.predict(X)
        new_penalty = penalty + tree_complexity(tree, config)
        r = y - new_pred
        new_objective = 0.5 * math.fsum(r * r) + new_penalty
        if not math.isfinite(new_objective):
            raise NumericalError(f"non-finite boosting objective at round {rnd}")
        if new_objective > objective:
            if n_sub == n:
                break
            continue
        model.trees.append(tree)
        pred, penalty, objective = new_pred, new_penalty, new_objective
        model.history.append(
            {
                "round": rnd,
                "n_trees": len(model.trees),
                "n_leaves": sum(1 for _ in tree.leaves()),
                "train_mse": float(np.mean(r * r)),
                "objective": objective,
            }
        )
    return model
