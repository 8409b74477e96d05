"""Flat-parameter classifiers: softmax regression and a one-hidden-layer ReLU MLP.

Parameters live in a single float64 vector (weights row-major, then biases,
layer by layer) so that local training, poisoning, and every aggregation rule
see the same shape regardless of architecture. Gradients are closed-form.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

# probabilities are clamped to [PROB_EPS, 1] before any log
PROB_EPS = 1e-12

SOFTMAX_REGRESSION = "softmax-regression"
MLP = "mlp"


class ShapeError(ValueError):
    """Parameter or feature dimensions disagree with the model spec."""


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; the parameter count is a pure function of it."""

    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in (SOFTMAX_REGRESSION, MLP):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind == MLP:
            if self.hidden_dim < 1:
                raise ValueError(f"hidden_dim must be >= 1 for mlp, got {self.hidden_dim}")
            if self.activation != "relu":
                raise ValueError(f"only relu activation is supported, got {self.activation!r}")

    def parameter_count(self) -> int:
        if self.kind == SOFTMAX_REGRESSION:
            return self.input_dim * self.num_classes + self.num_classes
        return (
            self.input_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.num_classes
            + self.num_classes
        )

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, in parameter-vector order."""
        if self.kind == SOFTMAX_REGRESSION:
            return [(self.input_dim, self.num_classes)]
        return [(self.input_dim, self.hidden_dim), (self.hidden_dim, self.num_classes)]


@dataclass(frozen=True)
class Batch:
    """A block of samples: features (n, input_dim) and integer class labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got ndim={feats.ndim}")
        if feats.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if labels.shape != (feats.shape[0],):
            raise ShapeError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} feature rows"
            )
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]


def _check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.parameter_count():
        raise ShapeError(
            f"expected {spec.parameter_count()} parameters for {spec.kind}, "
            f"got shape {params.shape}"
        )
    return params


def _check_features(spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != spec.input_dim:
        raise ShapeError(
            f"features must have shape (n, {spec.input_dim}), got {features.shape}"
        )
    return features


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into per-layer (W, b) views, W of shape (fan_in, fan_out)."""
    params = _check_params(spec, params)
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_dims():
        w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward_internal(spec, params, features):
    """Returns (probs, hidden_pre, hidden_post); hidden terms are None for softmax regression."""
    layers = unpack(spec, params)
    if spec.kind == SOFTMAX_REGRESSION:
        (w, b), = layers
        return _softmax_rows(features @ w + b), None, None
    (w1, b1), (w2, b2) = layers
    z1 = features @ w1 + b1
    h = np.maximum(z1, 0.0)
    return _softmax_rows(h @ w2 + b2), z1, h


def forward(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Class-probability rows; each row sums to 1 and is clamped to [PROB_EPS, 1]."""
    features = _check_features(spec, features)
    probs, _, _ = _forward_internal(spec, params, features)
    return np.clip(probs, PROB_EPS, 1.0)


def loss(spec: ModelSpec, params: np.ndarray, batch: Batch) -> float:
    """Mean cross-entropy over the batch, with probabilities clamped below by PROB_EPS."""
    probs = forward(spec, params, batch.features)
    _check_labels(spec, batch.labels)
    picked = probs[np.arange(len(batch)), batch.labels]
    return float(-np.mean(np.log(picked)))


def _check_labels(spec: ModelSpec, labels: np.ndarray):
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise ValueError(
            f"labels must lie in [0, {spec.num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )


def gradient(spec: ModelSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Exact gradient of `loss` with respect to the flat parameter vector."""
    features = _check_features(spec, batch.features)
    _check_labels(spec, batch.labels)
    probs, z1, h = _forward_internal(spec, params, features)
    n = features.shape[0]

    delta = probs.copy()
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    if spec.kind == SOFTMAX_REGRESSION:
        dw = features.T @ delta
        db = delta.sum(axis=0)
        return np.concatenate([dw.ravel(), db])

    layers = unpack(spec, params)
    w2 = layers[1][0]
    dw2 = h.T @ delta
    db2 = delta.sum(axis=0)
    dh = delta @ w2.T
    dz1 = dh * (z1 > 0.0)
    dw1 = features.T @ dz1
    db1 = dz1.sum(axis=0)
    return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeError(f"params shape {params.shape} != grad shape {grad.shape}")
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return params - lr * grad


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases."""
    pieces = []
    for fan_in, fan_out in spec.layer_dims():
        bound = 1.0 / np.sqrt(fan_in)
        pieces.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        pieces.append(rng.uniform(-bound, bound, size=fan_out))
    return np.concatenate(pieces)


# --- checkpoint wire format: uint64 little-endian length, then float64 LE values ---

def params_to_bytes(params: np.ndarray) -> bytes:
    params = np.asarray(params, dtype=np.float64)
    return struct.pack("<Q", params.size) + params.astype("<f8").tobytes()


def params_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 8:
        raise ValueError("checkpoint blob shorter than its 8-byte length header")
    (count,) = struct.unpack("<Q", blob[:8])
    expected = 8 + 8 * count
    if len(blob) != expected:
        raise ValueError(f"checkpoint blob has {len(blob)} bytes, expected {expected}")
    return np.frombuffer(blob[8:], dtype="<f8").astype(np.float64)


def save_params(params: np.ndarray, path):
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params))


def load_params(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
