"""Dense float64 numeric substrate used by the learning modules.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. This
module adds shape-checked primitives, activations, initialisers, a
counter-based seeded RNG, trainable parameter tensors with Adam moments,
and a central-difference gradient checker.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .errors import ConfigError, NumericalError, ShapeError

DTYPE = np.float64


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim == 1:
        m = m[np.newaxis, :]
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def add_rowvec(a, bias) -> np.ndarray:
    """Broadcast-add a 1 x cols row vector to every row of ``a``."""
    a, bias = as_matrix(a), as_matrix(bias)
    if bias.shape != (1, a.shape[1]):
        raise ShapeError(f"bias shape {bias.shape} does not fit rows of {a.shape}")
    return a + bias


def hadamard(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def sigmoid(x):
    return special.expit(np.asarray(x, dtype=DTYPE))


def tanh_act(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(v, axis: int = -1):
    # scipy subtracts the max before exponentiating
    return special.softmax(np.asarray(v, dtype=DTYPE), axis=axis)


class Rng:
    """Seeded random stream on the Philox counter-based generator.

    Philox output depends only on (key, counter), so a given seed and
    stream index yield the same draws on every platform.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def random(self, size=None):
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    @property
    def counter(self) -> np.ndarray:
        return self._gen.bit_generator.state["state"]["counter"].copy()


def glorot_init(rows: int, cols: int, rng: Rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(DTYPE)


def dropout_mask(shape, rate: float, rng: Rng) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 or 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape, dtype=DTYPE)
    keep = rng.random(shape) >= rate
    return keep.astype(DTYPE) / (1.0 - rate)


@dataclass
class ParamTensor:
    """Trainable matrix with its gradient buffer and Adam moments."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = as_matrix(self.value).copy()
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad.fill(0.0)


class Adam:
    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, params: Iterable[ParamTensor]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p in params:
            p.adam_m *= b1
            p.adam_m += (1.0 - b1) * p.grad
            p.adam_v *= b2
            p.adam_v += (1.0 - b2) * p.grad * p.grad
            m_hat = p.adam_m / corr1
            v_hat = p.adam_v / corr2
            p.value -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def finite_diff_check(
    f: Callable[[], float], params: Sequence[ParamTensor], h: float = 1e-5
) -> float:
    """Compare each ``p.grad`` against central differences of ``f``.

    ``f`` must read the current parameter values; the analytic gradients
    are expected to be in ``p.grad`` already. Returns the max over all
    entries of ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if h <= 0:
        raise ConfigError("finite-difference step must be positive")
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            f_plus = f()
            flat[k] = orig - h
            f_minus = f()
            flat[k] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericalError("non-finite objective during finite differencing")
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(analytic[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
