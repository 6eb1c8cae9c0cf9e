"""Dense feedforward classifier on a single flat parameter vector.

All weights and biases live in one float64 array so that clustering, tying
and compression can treat the network as N scalars.  Weight matrices are
stored as (fan_out, fan_in), so a row is a hidden unit and a column is an
input unit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkSpec",
    "Segment",
    "ParamVector",
    "Batch",
    "glorot_init",
    "forward",
    "data_loss",
    "loss_and_grad",
    "backward",
    "SGDState",
    "AdadeltaState",
    "sgd_momentum_step",
    "adadelta_step",
    "error_rate",
    "predict",
]


@dataclass(frozen=True)
class Segment:
    layer: int
    kind: str  # "W" or "b"
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class NetworkSpec:
    layer_dims: tuple[int, ...]
    include_bias: bool = True
    activation: str = "relu"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims needs >= 2 positive sizes, got {self.layer_dims}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def layout(self) -> tuple[Segment, ...]:
        segs = []
        off = 0
        for i, (d_in, d_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            segs.append(Segment(i, "W", off, (d_out, d_in)))
            off += d_in * d_out
            if self.include_bias:
                segs.append(Segment(i, "b", off, (d_out,)))
                off += d_out
        return tuple(segs)

    @property
    def n_params(self) -> int:
        return sum(s.size for s in self.layout)

    def bias_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_params, dtype=bool)
        for s in self.layout:
            if s.kind == "b":
                mask[s.offset:s.stop] = True
        return mask


@dataclass
class ParamVector:
    spec: NetworkSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_params,):
            raise ValueError(
                f"expected {self.spec.n_params} parameters for {self.spec.layer_dims}, got {self.values.shape}"
            )

    def weight(self, layer: int) -> np.ndarray:
        return self._view(layer, "W")

    def bias(self, layer: int) -> np.ndarray | None:
        if not self.spec.include_bias:
            return None
        return self._view(layer, "b")

    def _view(self, layer: int, kind: str) -> np.ndarray:
        for s in self.spec.layout:
            if s.layer == layer and s.kind == kind:
                return self.values[s.offset:s.stop].reshape(s.shape)
        raise KeyError(f"no {kind} segment for layer {layer}")

    def matrices(self) -> list[tuple[np.ndarray, np.ndarray | None]]:
        return [(self.weight(i), self.bias(i)) for i in range(self.spec.n_layers)]

    @classmethod
    def from_matrices(cls, spec: NetworkSpec, mats) -> ParamVector:
        out = cls(spec, np.zeros(spec.n_params))
        for i, (w, b) in enumerate(mats):
            out.weight(i)[...] = w
            if spec.include_bias:
                out.bias(i)[...] = b
        return out

    def copy(self) -> ParamVector:
        return ParamVector(self.spec, self.values.copy())


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def glorot_init(spec: NetworkSpec, seed: int) -> ParamVector:
    """Uniform(-L, L) weights with L = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    pv = ParamVector(spec, np.zeros(spec.n_params))
    for s in spec.layout:
        if s.kind == "W":
            fan_out, fan_in = s.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            pv.values[s.offset:s.stop] = rng.uniform(-limit, limit, size=s.size)
    return pv


def _check_input(spec: NetworkSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.layer_dims[0]:
        raise ValueError(f"layer 0 expects inputs of width {spec.layer_dims[0]}, got shape {x.shape}")
    return x


def _forward_cache(params: ParamVector, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    last = params.spec.n_layers - 1
    for i, (w, b) in enumerate(params.matrices()):
        z = h @ w.T
        if b is not None:
            z += b
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return acts


def forward(spec: NetworkSpec, params: ParamVector, inputs) -> np.ndarray:
    """Logits of shape (B, C)."""
    x = _check_input(spec, inputs)
    return _forward_cache(params, x)[-1]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def data_loss(logits, labels) -> float:
    """Mean cross-entropy of the true class."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(labels.size), labels].mean())


def loss_and_grad(spec: NetworkSpec, params: ParamVector, batch: Batch) -> tuple[float, np.ndarray]:
    x = _check_input(spec, batch.inputs)
    y = np.asarray(batch.labels, dtype=np.int64)
    acts = _forward_cache(params, x)
    logp = _log_softmax(acts[-1])
    b = y.size
    loss = float(-logp[np.arange(b), y].mean())

    grad = np.zeros(spec.n_params)
    g = ParamVector(spec, grad)
    delta = np.exp(logp)
    delta[np.arange(b), y] -= 1.0
    delta /= b
    for i in range(spec.n_layers - 1, -1, -1):
        g.weight(i)[...] = delta.T @ acts[i]
        if spec.include_bias:
            g.bias(i)[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weight(i)) * (acts[i] > 0)
    return loss, grad


def backward(spec: NetworkSpec, params: ParamVector, batch: Batch) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to every parameter."""
    return loss_and_grad(spec, params, batch)[1]


def predict(spec: NetworkSpec, params: ParamVector, inputs, chunk: int = 4096) -> np.ndarray:
    x = _check_input(spec, inputs)
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = np.argmax(_forward_cache(params, x[s:s + chunk])[-1], axis=1)
    return out


def error_rate(spec: NetworkSpec, params: ParamVector, inputs, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("error_rate needs a non-empty dataset")
    return float(np.mean(predict(spec, params, inputs) != labels))


@dataclass
class SGDState:
    velocity: np.ndarray


@dataclass
class AdadeltaState:
    sq_grad: np.ndarray
    sq_update: np.ndarray


def sgd_momentum_step(params: np.ndarray, grad: np.ndarray, state: SGDState, lr: float, momentum: float = 0.9):
    """v <- momentum*v + grad; w <- w - lr*v (in place)."""
    state.velocity *= momentum
    state.velocity += grad
    params -= lr * state.velocity
    return params, state


def adadelta_step(
    params: np.ndarray, grad: np.ndarray, state: AdadeltaState, rho: float = 0.95, epsilon: float = 1e-6, lr: float = 1.0
):
    """Adadelta update (in place); ``lr`` scales the step and is 1 in the original rule."""
    state.sq_grad *= rho
    state.sq_grad += (1.0 - rho) * grad * grad
    delta = np.sqrt(state.sq_update + epsilon) / np.sqrt(state.sq_grad + epsilon) * grad
    state.sq_update *= rho
    state.sq_update += (1.0 - rho) * delta * delta
    params -= lr * delta
    return params, state
