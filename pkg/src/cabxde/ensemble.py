"""Fusion of the two base forecasters.

Two routes: a convex combination whose weights are the reciprocal-error
shares of each model, and an ordinary-least-squares stacking layer over
the raw base predictions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

RIDGE_FALLBACK = 1e-10


@dataclass(frozen=True)
class ReciprocalWeights:
    w_bl: float
    w_xg: float
    degenerate: bool = False


def reciprocal_weights(e_bl: float, e_xg: float) -> ReciprocalWeights:
    """Each model's weight is the *other* model's share of the total error."""
    if e_bl < 0 or e_xg < 0:
        raise DataError("errors must be non-negative")
    total = e_bl + e_xg
    if total == 0:
        warnings.warn("both base models report zero error; falling back to equal weights", RuntimeWarning)
        return ReciprocalWeights(0.5, 0.5, degenerate=True)
    return ReciprocalWeights(e_xg / total, e_bl / total)


def _same_length(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"prediction series lengths differ: {a.size} vs {b.size}")
    return a, b


def weighted_combine(p_bl, p_xg, w: ReciprocalWeights) -> np.ndarray:
    a, b = _same_length(p_bl, p_xg)
    return w.w_bl * a + w.w_xg * b


@dataclass(frozen=True)
class StackingModel:
    intercept: float
    coef_bl: float
    coef_xg: float

    def predict(self, p_bl, p_xg) -> np.ndarray:
        a, b = _same_length(p_bl, p_xg)
        return self.intercept + self.coef_bl * a + self.coef_xg * b


def fit_stacking(p_bl, p_xg, targets) -> StackingModel:
    """OLS with intercept through the normal equations.

    Columns are centred and scaled first so the Gram matrix stays well
    conditioned when both base forecasts track the target closely; one
    step of iterative refinement follows the solve.
    """
    a, b = _same_length(p_bl, p_xg)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.shape != a.shape:
        raise DataError("targets and predictions differ in length")
    if len(y) < 3:
        raise DataError("stacking needs at least 3 samples")
    P = np.column_stack([a, b])
    mu = P.mean(axis=0)
    sd = P.std(axis=0)
    sd[sd == 0] = 1.0
    Z = np.column_stack([np.ones(len(y)), (P - mu) / sd])
    gram = Z.T @ Z
    rhs = Z.T @ y
    beta = _solve_spd(gram, rhs)
    beta = beta + _solve_spd(gram, Z.T @ (y - Z @ beta))
    coef = beta[1:] / sd
    intercept = beta[0] - float(coef @ mu)
    if not np.all(np.isfinite(coef)) or not np.isfinite(intercept):
        raise NumericalError("stacking coefficients are not finite")
    return StackingModel(float(intercept), float(coef[0]), float(coef[1]))


def _solve_spd(gram, rhs):
    try:
        if np.linalg.cond(gram) < 1e14:
            return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        pass
    ridged = gram + RIDGE_FALLBACK * np.eye(len(gram))
    try:
        if np.linalg.cond(ridged) < 1e15:
            return np.linalg.solve(ridged, rhs)
    except np.linalg.LinAlgError:
        pass
    raise NumericalError("stacking design is rank deficient even after ridge fallback")


def stack_predict(model: StackingModel, p_bl, p_xg) -> np.ndarray:
    return model.predict(p_bl, p_xg)
