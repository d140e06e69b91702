"""Attention-customised bidirectional LSTM regressor.

Each LSTM cell either uses the usual forget gate or an *attention gate*
that looks only at the previous cell state, ``sigmoid(c_prev @ W_a + b_a)``.
Two bidirectional layers (forward and backward cells, hidden states
concatenated) feed an additive temporal attention pooling and a linear
head. Gradients are derived by hand and propagated through time; training
uses Adam on mean squared error with dropout and early stopping.

Shapes follow the ``(batch, time, features)`` convention throughout.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .ndcore import Adam, ParamTensor, Rng, dropout_mask, finite_diff_check, glorot_init, sigmoid, softmax

log = logging.getLogger(__name__)

GATES = ("i", "f", "c", "o")


@dataclass
class TrainConfig:
    units: int = 99
    time_step: int = 99
    num_layers: int = 2
    batch_size: int = 64
    epochs: int = 64
    dropout: float = 0.2
    patience: int = 10
    learning_rate: float = 1e-3
    attention_gate: bool = True
    seed: int = 0

    def validate(self):
        for name in ("units", "time_step", "num_layers", "batch_size", "epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive count, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.patience > self.epochs:
            raise ConfigError("patience cannot exceed epochs")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        return self


class LstmCell:
    """One recurrent direction. ``params`` maps names to ParamTensors.

    Input-facing weights ``W_x*`` are (n_in, units), recurrent ``W_h*`` are
    (units, units), offsets ``b_*`` are (1, units). With the attention gate
    the forget gate's ``W_xf, W_hf, b_f`` are replaced by ``W_a`` (units,
    units) acting on the previous cell state and ``b_a``.
    """

    def __init__(self, n_in: int, units: int, rng: Rng | None = None, attention_gate: bool = True):
        self.n_in = n_in
        self.units = units
        self.attention_gate = attention_gate
        self.params: dict[str, ParamTensor] = {}
        for g in GATES:
            if g == "f" and attention_gate:
                self.params["W_a"] = self._weight(units, units, rng)
                self.params["b_a"] = ParamTensor(np.zeros((1, units)))
                continue
            self.params[f"W_x{g}"] = self._weight(n_in, units, rng)
            self.params[f"W_h{g}"] = self._weight(units, units, rng)
            self.params[f"b_{g}"] = ParamTensor(np.zeros((1, units)))

    @staticmethod
    def _weight(rows, cols, rng):
        return ParamTensor(glorot_init(rows, cols, rng) if rng is not None else np.zeros((rows, cols)))

    def __getitem__(self, name) -> np.ndarray:
        return self.params[name].value

    def input_gates(self):
        return [g for g in GATES if f"W_x{g}" in self.params]

    def step(self, x, h_prev, c_prev):
        """Advance one time step; returns ``(h, c, (i, f, g, o))``."""
        p = self
        zi = x @ p["W_xi"] + h_prev @ p["W_hi"] + p["b_i"]
        if self.attention_gate:
            zf = c_prev @ p["W_a"] + p["b_a"]
        else:
            zf = x @ p["W_xf"] + h_prev @ p["W_hf"] + p["b_f"]
        zc = x @ p["W_xc"] + h_prev @ p["W_hc"] + p["b_c"]
        zo = x @ p["W_xo"] + h_prev @ p["W_ho"] + p["b_o"]
        i, f, g, o = sigmoid(zi), sigmoid(zf), np.tanh(zc), sigmoid(zo)
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        return h, c, (i, f, g, o)

    def forward(self, X):
        """Run over ``X`` (B, T, n_in) in index order; returns hidden (B, T, u)."""
        B, T, n = X.shape
        if n != self.n_in:
            raise ShapeError(f"cell expects {self.n_in} input features, got {n}")
        u = self.units
        Xf = X.reshape(B * T, n)
        # input projections for all steps at once
        proj = {g: (Xf @ self[f"W_x{g}"] + self[f"b_{g}"]).reshape(B, T, u) for g in self.input_gates()}
        acts = {k: np.empty((B, T, u)) for k in ("i", "f", "g", "o", "c", "tc", "h_prev", "c_prev")}
        H = np.empty((B, T, u))
        h = np.zeros((B, u))
        c = np.zeros((B, u))
        for t in range(T):
            i = sigmoid(proj["i"][:, t] + h @ self["W_hi"])
            if self.attention_gate:
                f = sigmoid(c @ self["W_a"] + self["b_a"])
            else:
                f = sigmoid(proj["f"][:, t] + h @ self["W_hf"])
            g = np.tanh(proj["c"][:, t] + h @ self["W_hc"])
            o = sigmoid(proj["o"][:, t] + h @ self["W_ho"])
            acts["h_prev"][:, t] = h
            acts["c_prev"][:, t] = c
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            acts["i"][:, t], acts["f"][:, t], acts["g"][:, t], acts["o"][:, t] = i, f, g, o
            acts["c"][:, t], acts["tc"][:, t] = c, tc
            H[:, t] = h
        if not np.all(np.isfinite(H)):
            raise NumericalError("non-finite LSTM state")
        acts["X"] = X
        return H, acts

    def backward(self, dH, cache):
        """Backpropagate ``dH`` (B, T, u) through time; returns dX."""
        B, T, u = dH.shape
        X = cache["X"]
        n = X.shape[2]
        dZ = {g: np.empty((B, T, u)) for g in GATES}
        dh_next = np.zeros((B, u))
        dc_next = np.zeros((B, u))
        P = self.params
        for t in range(T - 1, -1, -1):
            i, f, g, o = (cache[k][:, t] for k in ("i", "f", "g", "o"))
            tc, c_prev, h_prev = cache["tc"][:, t], cache["c_prev"][:, t], cache["h_prev"][:, t]
            dh = dH[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dzi = dc * g * i * (1.0 - i)
            dzf = dc * c_prev * f * (1.0 - f)
            dzc = dc * i * (1.0 - g * g)
            dzo = do * o * (1.0 - o)
            dZ["i"][:, t], dZ["f"][:, t], dZ["c"][:, t], dZ["o"][:, t] = dzi, dzf, dzc, dzo
            dc_next = dc * f
            dh_next = dzi @ self["W_hi"].T + dzc @ self["W_hc"].T + dzo @ self["W_ho"].T
            P["W_hi"].grad += h_prev.T @ dzi
            P["W_hc"].grad += h_prev.T @ dzc
            P["W_ho"].grad += h_prev.T @ dzo
            if self.attention_gate:
                P["W_a"].grad += c_prev.T @ dzf
                dc_next = dc_next + dzf @ self["W_a"].T
            else:
                P["W_hf"].grad += h_prev.T @ dzf
                dh_next = dh_next + dzf @ self["W_hf"].T
        Xf = X.reshape(B * T, n)
        dX = np.zeros((B * T, n))
        for g in GATES:
            dz = dZ[g].reshape(B * T, u)
            if g == "f" and self.attention_gate:
                P["b_a"].grad += dz.sum(axis=0, keepdims=True)
                continue
            P[f"W_x{g}"].grad += Xf.T @ dz
            P[f"b_{g}"].grad += dz.sum(axis=0, keepdims=True)
            dX += dz @ self[f"W_x{g}"].T
        return dX.reshape(B, T, n)


def lstm_cell_step(x_t, h_prev, c_prev, cell: LstmCell):
    """Single-step transition ``(h_t, c_t)``; accepts vectors or batches."""
    x_t, h_prev, c_prev = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x_t, h_prev, c_prev))
    if x_t.shape[1] != cell.n_in or h_prev.shape[1] != cell.units or c_prev.shape[1] != cell.units:
        raise ShapeError("lstm_cell_step dimension mismatch")
    h, c, _ = cell.step(x_t, h_prev, c_prev)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericalError("non-finite LSTM state")
    return h, c


class BiLstmLayer:
    def __init__(self, n_in: int, units: int, rng: Rng | None, attention_gate: bool):
        self.forward_cell = LstmCell(n_in, units, rng, attention_gate)
        self.backward_cell = LstmCell(n_in, units, rng, attention_gate)
        self.units = units

    def cells(self):
        return (("fwd", self.forward_cell), ("bwd", self.backward_cell))

    def forward(self, X):
        Hf, cf = self.forward_cell.forward(X)
        Hb_rev, cb = self.backward_cell.forward(np.ascontiguousarray(X[:, ::-1]))
        out = np.concatenate([Hf, Hb_rev[:, ::-1]], axis=2)
        return out, (cf, cb)

    def backward(self, dOut, cache):
        cf, cb = cache
        u = self.units
        dXf = self.forward_cell.backward(np.ascontiguousarray(dOut[:, :, :u]), cf)
        dXb_rev = self.backward_cell.backward(np.ascontiguousarray(dOut[:, ::-1, u:]), cb)
        return dXf + dXb_rev[:, ::-1]


class TemporalAttention:
    """Additive scoring ``e_t = tanh(h_t W_s + b_s) v_s`` softmaxed over time."""

    def __init__(self, width: int, units: int, rng: Rng | None):
        init = (lambda r, c: glorot_init(r, c, rng)) if rng is not None else (lambda r, c: np.zeros((r, c)))
        self.params = {
            "W_s": ParamTensor(init(width, units)),
            "b_s": ParamTensor(np.zeros((1, units))),
            "v_s": ParamTensor(init(units, 1)),
        }

    def forward(self, H):
        B, T, D = H.shape
        W_s, b_s, v_s = (self.params[k].value for k in ("W_s", "b_s", "v_s"))
        if D != W_s.shape[0]:
            raise ShapeError(f"attention expects width {W_s.shape[0]}, got {D}")
        A = np.tanh((H.reshape(B * T, D) @ W_s + b_s))
        scores = (A @ v_s).reshape(B, T)
        alphas = softmax(scores, axis=1)
        context = np.einsum("bt,btd->bd", alphas, H)
        return context, alphas, (H, A, alphas)

    def backward(self, dctx, cache):
        H, A, alphas = cache
        B, T, D = H.shape
        P = self.params
        dalpha = np.einsum("btd,bd->bt", H, dctx)
        dH = alphas[:, :, None] * dctx[:, None, :]
        de = alphas * (dalpha - (alphas * dalpha).sum(axis=1, keepdims=True))
        de_flat = de.reshape(B * T, 1)
        P["v_s"].grad += A.T @ de_flat
        dZ = (de_flat @ P["v_s"].value.T) * (1.0 - A * A)
        P["W_s"].grad += H.reshape(B * T, D).T @ dZ
        P["b_s"].grad += dZ.sum(axis=0, keepdims=True)
        dH += (dZ @ P["W_s"].value.T).reshape(B, T, D)
        return dH


def temporal_attention(hidden_seq, attention: TemporalAttention):
    """Pool one (T, D) or batched (B, T, D) hidden sequence.

    Returns ``(context, alphas)``.
    """
    H = np.asarray(hidden_seq, dtype=np.float64)
    single = H.ndim == 2
    if single:
        H = H[None]
    ctx, alphas, _ = attention.forward(H)
    return (ctx[0], alphas[0]) if single else (ctx, alphas)


class BiLstmNetwork:
    def __init__(self, n_features: int, config: TrainConfig, init: bool = True):
        config.validate()
        self.config = config
        self.n_features = n_features
        rng = Rng(config.seed, stream=0) if init else None
        u = config.units
        self.layers = [
            BiLstmLayer(n_features if k == 0 else 2 * u, u, rng, config.attention_gate)
            for k in range(config.num_layers)
        ]
        self.attention = TemporalAttention(2 * u, u, rng)
        self.head = {
            "W_out": ParamTensor(glorot_init(2 * u, 1, rng) if rng is not None else np.zeros((2 * u, 1))),
            "b_out": ParamTensor(np.zeros((1, 1))),
        }
        self.best_val_loss = math.inf

    def named_parameters(self):
        for k, layer in enumerate(self.layers):
            for direction, cell in layer.cells():
                for name, p in cell.params.items():
                    yield f"layer{k}.{direction}.{name}", p
        for name, p in self.attention.params.items():
            yield f"attention.{name}", p
        for name, p in self.head.items():
            yield f"head.{name}", p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[2] != self.n_features:
            raise ShapeError(f"expected input (batch, time, {self.n_features}), got {X.shape}")
        return X

    def hidden_sequence(self, X):
        X = self._check_input(X)
        for layer in self.layers:
            X, _ = layer.forward(X)
        return X

    def forward(self, X, train: bool = False, rng: Rng | None = None):
        X = self._check_input(X)
        rate = self.config.dropout if train else 0.0
        caches = []
        for layer in self.layers:
            out, cache = layer.forward(X)
            mask = dropout_mask(out.shape, rate, rng) if rate > 0 else None
            if mask is not None:
                out = out * mask
            caches.append((cache, mask))
            X = out
        ctx, alphas, att_cache = self.attention.forward(X)
        ctx_mask = dropout_mask(ctx.shape, rate, rng) if rate > 0 else None
        ctx_d = ctx * ctx_mask if ctx_mask is not None else ctx
        pred = (ctx_d @ self.head["W_out"].value + self.head["b_out"].value)[:, 0]
        return pred, {"layers": caches, "att": att_cache, "ctx": ctx_d, "ctx_mask": ctx_mask, "alphas": alphas}

    def backward(self, cache, dpred):
        dpred = dpred.reshape(-1, 1)
        self.head["W_out"].grad += cache["ctx"].T @ dpred
        self.head["b_out"].grad += dpred.sum(axis=0, keepdims=True)
        dctx = dpred @ self.head["W_out"].value.T
        if cache["ctx_mask"] is not None:
            dctx = dctx * cache["ctx_mask"]
        dX = self.attention.backward(dctx, cache["att"])
        for layer, (lcache, mask) in zip(reversed(self.layers), reversed(cache["layers"])):
            if mask is not None:
                dX = dX * mask
            dX = layer.backward(dX, lcache)
        return dX

    def predict(self, X, chunk: int = 256) -> np.ndarray:
        X = self._check_input(X)
        out = [self.forward(X[s : s + chunk])[0] for s in range(0, len(X), chunk)]
        return np.concatenate(out) if out else np.empty(0)

    def loss(self, X, y) -> float:
        r = self.predict(X) - np.asarray(y, dtype=np.float64)
        return float(np.mean(r * r))

    def loss_and_grad(self, X, y, train: bool = False, rng: Rng | None = None) -> float:
        """MSE of one batch; gradients are accumulated into ``p.grad``."""
        y = np.asarray(y, dtype=np.float64)
        pred, cache = self.forward(X, train=train, rng=rng)
        r = pred - y
        loss = float(np.mean(r * r))
        self.backward(cache, 2.0 * r / len(y))
        return loss

    # -- persistence -------------------------------------------------------

    def state_values(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_values(self, values: dict[str, np.ndarray]):
        for name, p in self.named_parameters():
            v = np.asarray(values[name], dtype=np.float64).reshape(p.shape)
            p.value[...] = v

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "n_features": self.n_features,
            "best_val_loss": self.best_val_loss if math.isfinite(self.best_val_loss) else None,
            "tensors": {
                name: {"shape": list(p.shape), "values": p.value.reshape(-1).tolist()}
                for name, p in self.named_parameters()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiLstmNetwork":
        net = cls(int(d["n_features"]), TrainConfig(**d["config"]), init=False)
        tensors = d["tensors"]
        for name, p in net.named_parameters():
            t = tensors[name]
            if tuple(t["shape"]) != p.shape:
                raise ShapeError(f"checkpoint tensor {name} has shape {t['shape']}, expected {p.shape}")
            p.value[...] = np.asarray(t["values"], dtype=np.float64).reshape(p.shape)
        bvl = d.get("best_val_loss")
        net.best_val_loss = math.inf if bvl is None else float(bvl)
        return net


def bilstm_forward(sample, net: BiLstmNetwork):
    """Top-layer hidden sequence, (time_step, 2*units) for a single window."""
    X = np.asarray(getattr(sample, "inputs", sample), dtype=np.float64)
    H = net.hidden_sequence(X)
    return H[0] if X.ndim == 2 else H


def predict(net: BiLstmNetwork, sample) -> float | np.ndarray:
    X = np.asarray(getattr(sample, "inputs", sample), dtype=np.float64)
    out = net.predict(X)
    return float(out[0]) if X.ndim == 2 else out


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stopped_early: bool = False


def train(net: BiLstmNetwork, X_train, y_train, X_val, y_val) -> TrainResult:
    """Mini-batch BPTT with Adam; restores the best-validation parameters."""
    cfg = net.config
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(y_train) == 0 or len(y_val) == 0:
        raise ConfigError("training and validation splits must be non-empty")
    rng = Rng(cfg.seed, stream=1)
    opt = Adam(cfg.learning_rate)
    params = net.parameters()
    result = TrainResult()
    best_values = net.state_values()
    wait = 0
    n = len(y_train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            net.zero_grad()
            loss = net.loss_and_grad(X_train[idx], y_train[idx], train=True, rng=rng)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch + 1}")
            opt.step(params)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = net.loss(X_val, y_val)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch + 1}")
        result.history.append({"epoch": epoch + 1, "train_loss": train_loss, "val_loss": val_loss})
        log.debug("epoch %d train %.6g val %.6g", epoch + 1, train_loss, val_loss)
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch + 1
            best_values = net.state_values()
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                result.stopped_early = True
                break
    net.load_values(best_values)
    net.best_val_loss = result.best_val_loss
    return result


def gradient_check(net: BiLstmNetwork, X, y, h: float = 1e-5) -> float:
    """Max relative error between BPTT gradients and central differences."""
    X = np.asarray(X, dtype=np.float64)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    net.zero_grad()
    net.loss_and_grad(X, y)

    def objective():
        pred, _ = net.forward(X)
        r = pred - y
        return float(np.mean(r * r))

    return finite_diff_check(objective, net.parameters(), h)


def clone(net: BiLstmNetwork) -> BiLstmNetwork:
    return copy.deepcopy(net)
