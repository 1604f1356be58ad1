"""Dense feed-forward classifiers with hand-written reverse-mode gradients.

Everything operates on flat float64 parameter vectors so that samplers can
treat a network as a point in R^P. The parameter layout is fixed: for each
layer, the weight matrix (fan_in x fan_out, row-major) followed by its bias
vector, layers in input-to-output order. Only this fixed MLP topology is
differentiated; there is no general autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError, ShapeMismatchError

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")


@dataclass(frozen=True)
class NetworkArch:
    """Shape and nonlinearity of a dense classifier f(x, w)."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    num_classes: int
    activation: str = "relu"
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be >= 1, got {self.hidden_sizes}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, input to output."""
        sizes = (self.input_dim, *self.hidden_sizes, self.num_classes)
        return list(zip(sizes[:-1], sizes[1:]))

    @property
    def param_count(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_dims)

    def describe(self) -> str:
        hidden = ",".join(str(h) for h in self.hidden_sizes)
        return f"{self.input_dim}-[{hidden}]-{self.num_classes}/{self.activation}"


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {what}")


def init_weights(arch: NetworkArch, scheme: str = "he", rng=None) -> np.ndarray:
    """Flat parameter vector; weights drawn per scheme, biases zero.

    he: N(0, 2/fan_in).  xavier: N(0, 1/fan_in).  zeros: all zero.
    """
    if scheme == "zeros":
        return np.zeros(arch.param_count)
    if scheme not in ("he", "xavier"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(rng)
    parts = []
    for fi, fo in arch.layer_dims:
        var = (2.0 if scheme == "he" else 1.0) / fi
        parts.append(rng.normal(0.0, np.sqrt(var), size=fi * fo))
        parts.append(np.zeros(fo))
    return np.concatenate(parts)


def split_params(arch: NetworkArch, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector. No copies."""
    w = np.asarray(w)
    if w.shape != (arch.param_count,):
        raise ShapeMismatchError(
            f"weight vector has shape {w.shape}, arch {arch.describe()} needs ({arch.param_count},)"
        )
    out = []
    off = 0
    for fi, fo in arch.layer_dims:
        W = w[off:off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = w[off:off + fo]
        off += fo
        out.append((W, b))
    return out


def _act(z: np.ndarray, arch: NetworkArch) -> np.ndarray:
    kind = arch.activation
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0.0, z, arch.leaky_slope * z)
    if kind == "tanh":
        return np.tanh(z)
    return 1.0 / (1.0 + np.exp(-z))  # sigmoid


def _act_grad(z: np.ndarray, a: np.ndarray, arch: NetworkArch) -> np.ndarray:
    # Subgradient choices at the kink: relu'(0)=0, leaky_relu'(0)=slope.
    kind = arch.activation
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z > 0.0, 1.0, arch.leaky_slope)
    if kind == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)  # sigmoid


def _check_batch(arch: NetworkArch, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ShapeMismatchError(
            f"input has {X.shape[1]} features, arch {arch.describe()} expects {arch.input_dim}"
        )
    return X


def _forward_cached(arch, w, X):
    """Forward pass keeping pre/post-activation tensors for backprop."""
    layers = split_params(arch, w)
    a = X
    zs, acts = [], [X]
    for k, (W, b) in enumerate(layers):
        z = a @ W + b
        if k < len(layers) - 1:
            a = _act(z, arch)
            zs.append(z)
            acts.append(a)
        else:
            logits = z
    return logits, zs, acts, layers


def forward_batch(arch: NetworkArch, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs, shape (N, num_classes)."""
    X = _check_batch(arch, X)
    logits, _, _, _ = _forward_cached(arch, w, X)
    return logits


def forward(arch: NetworkArch, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Logits for a single input, shape (num_classes,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatchError(f"forward expects a 1-d input, got shape {x.shape}")
    return forward_batch(arch, w, x[None, :])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis (max subtraction)."""
    z = np.asarray(logits, dtype=np.float64)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = np.max(z, axis=-1, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """-log softmax(logits)[label] via log-sum-exp; probabilities never formed."""
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < z.shape[-1]:
        raise IndexError(f"label {label} out of range for {z.shape[-1]} classes")
    return float(-log_softmax(z)[..., label])


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example losses, shape (N,)."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise IndexError(f"labels outside [0, {z.shape[1]})")
    ls = log_softmax(z)
    return -ls[np.arange(z.shape[0]), labels]


def _onehot_residual(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(sum of CE)/d(logits) = softmax - onehot, per example."""
    delta = softmax(logits)
    delta[np.arange(logits.shape[0]), np.asarray(labels)] -= 1.0
    return delta


def _backprop(arch, layers, zs, acts, delta, want_weights, want_input):
    """Propagate a logit cotangent back through the stack.

    delta: (N, num_classes) cotangent at the logits. Returns (grad_w, grad_X);
    either may be None depending on the want_* flags.
    """
    n_layers = len(layers)
    grad_parts = [None] * (2 * n_layers) if want_weights else None
    for k in range(n_layers - 1, -1, -1):
        W, _ = layers[k]
        if want_weights:
            grad_parts[2 * k] = (acts[k].T @ delta).ravel()
            grad_parts[2 * k + 1] = delta.sum(axis=0)
        if k == 0:
            if want_input:
                return grad_parts, delta @ W.T
            return grad_parts, None
        delta = (delta @ W.T) * _act_grad(zs[k - 1], acts[k], arch)
    raise AssertionError("unreachable")


def grad_weights(arch: NetworkArch, w: np.ndarray, X: np.ndarray, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy over the batch w.r.t. the flat weights."""
    X = _check_batch(arch, X)
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape[0] != X.shape[0]:
        raise ShapeMismatchError(f"{X.shape[0]} inputs but {labels.shape[0]} labels")
    logits, zs, acts, layers = _forward_cached(arch, w, X)
    delta = _onehot_residual(logits, labels) / X.shape[0]
    parts, _ = _backprop(arch, layers, zs, acts, delta, True, False)
    return np.concatenate(parts)


def grad_input_batch(arch: NetworkArch, w: np.ndarray, X: np.ndarray, labels) -> np.ndarray:
    """Per-example gradient of the cross-entropy w.r.t. the input, shape (N, d)."""
    X = _check_batch(arch, X)
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape[0] != X.shape[0]:
        raise ShapeMismatchError(f"{X.shape[0]} inputs but {labels.shape[0]} labels")
    logits, zs, acts, layers = _forward_cached(arch, w, X)
    delta = _onehot_residual(logits, labels)
    _, gx = _backprop(arch, layers, zs, acts, delta, False, True)
    return gx


def grad_input(arch: NetworkArch, w: np.ndarray, x: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the loss at a single point w.r.t. x, weights held fixed."""
    x = np.asarray(x, dtype=np.float64)
    return grad_input_batch(arch, w, x[None, :], [label])[0]


def backprop_to_input(arch: NetworkArch, w: np.ndarray, X: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    """Pull an arbitrary logit cotangent back to the input, shape (N, d).

    Used for gradients of functionals of the predictive distribution that are
    not per-sample cross-entropies.
    """
    X = _check_batch(arch, X)
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (X.shape[0], arch.num_classes):
        raise ShapeMismatchError(
            f"cotangent shape {dlogits.shape} != ({X.shape[0]}, {arch.num_classes})"
        )
    _, zs, acts, layers = _forward_cached(arch, w, X)
    _, gx = _backprop(arch, layers, zs, acts, dlogits, False, True)
    return gx
