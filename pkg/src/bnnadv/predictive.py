"""Ensemble predictive distribution and posterior-averaged input gradients.

The predictive is the probability-space average of per-sample softmax
outputs. The expected loss gradient averages each sample's own input
gradient (the Monte Carlo estimator attacks are built on); prefix averaging
uses samples in stored order so sweeps over the sample count are nested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .inference import PosteriorEnsemble
from .nets import (
    backprop_to_input,
    cross_entropy_batch,
    forward_batch,
    grad_input_batch,
    softmax,
)


@dataclass
class PredictiveResult:
    probs: np.ndarray  # (num_classes,)
    per_sample_probs: np.ndarray | None = None  # (n, num_classes)


@dataclass
class ExpectedGradient:
    grad: np.ndarray  # input-shaped
    n_samples: int
    per_component_abs_median: float


def _check_n_use(ensemble: PosteriorEnsemble, n_use) -> int:
    n = len(ensemble)
    if n_use is None:
        return n
    if not 1 <= n_use <= n:
        raise ValueError(f"n_use={n_use} outside [1, {n}]")
    return int(n_use)


def predict_probs_batch(ensemble: PosteriorEnsemble, X: np.ndarray, n_use=None) -> np.ndarray:
    """Mean softmax over the first n_use samples, shape (N, num_classes)."""
    k = _check_n_use(ensemble, n_use)
    acc = np.zeros((np.atleast_2d(X).shape[0], ensemble.arch.num_classes))
    for i in range(k):
        acc += softmax(forward_batch(ensemble.arch, ensemble.samples[i], X))
    return acc / k


def predict_ensemble(ensemble: PosteriorEnsemble, x: np.ndarray, keep_per_sample: bool = True) -> PredictiveResult:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatchError(f"expected a single input vector, got shape {x.shape}")
    per = np.stack(
        [softmax(forward_batch(ensemble.arch, w, x[None, :])[0]) for w in ensemble.samples]
    )
    probs = per.mean(axis=0)
    return PredictiveResult(probs, per if keep_per_sample else None)


def predict_label(ensemble: PosteriorEnsemble, x: np.ndarray) -> int:
    """Argmax of the predictive; ties resolve to the lowest class index."""
    return int(np.argmax(predict_ensemble(ensemble, x, keep_per_sample=False).probs))


def predict_labels_batch(ensemble: PosteriorEnsemble, X: np.ndarray, n_use=None) -> np.ndarray:
    return np.argmax(predict_probs_batch(ensemble, X, n_use), axis=1)


def expected_loss_gradient_batch(
    ensemble: PosteriorEnsemble, X: np.ndarray, labels, n_use=None, sample_indices=None
) -> np.ndarray:
    """Average of per-sample input gradients over the first n_use samples, (N, d).

    sample_indices, when given, selects an explicit subset instead of the
    prefix (used for per-iteration posterior resampling in attacks).
    """
    if sample_indices is None:
        sample_indices = range(_check_n_use(ensemble, n_use))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.atleast_1d(labels)
    acc = np.zeros_like(X)
    for i in sample_indices:
        acc += grad_input_batch(ensemble.arch, ensemble.samples[i], X, labels)
    return acc / len(sample_indices)


def expected_loss_gradient(ensemble: PosteriorEnsemble, x: np.ndarray, label: int, n_use=None) -> ExpectedGradient:
    k = _check_n_use(ensemble, n_use)
    g = expected_loss_gradient_batch(ensemble, np.asarray(x)[None, :], [label], k)[0]
    return ExpectedGradient(g, k, float(np.median(np.abs(g))))


def expected_prediction_gradient(ensemble: PosteriorEnsemble, x: np.ndarray, label: int, n_use=None) -> np.ndarray:
    """Gradient of the cross-entropy of the *averaged* predictive probabilities.

    Secondary variant: differentiates -log(mean_i p_i(x))[label] instead of
    averaging per-sample loss gradients.
    """
    k = _check_n_use(ensemble, n_use)
    x = np.asarray(x, dtype=np.float64)[None, :]
    per_probs = [
        softmax(forward_batch(ensemble.arch, ensemble.samples[i], x)) for i in range(k)
    ]
    mean_probs = np.mean(per_probs, axis=0)
    d_mean = np.zeros_like(mean_probs)
    d_mean[0, label] = -1.0 / mean_probs[0, label]
    g = np.zeros_like(x)
    for i in range(k):
        p = per_probs[i]
        # softmax vjp: p * (v - <v, p>)
        v = d_mean / k
        dlogits = p * (v - np.sum(v * p, axis=1, keepdims=True))
        g += backprop_to_input(ensemble.arch, ensemble.samples[i], x, dlogits)
    return g[0]


def ensemble_mean_loss_batch(ensemble: PosteriorEnsemble, X: np.ndarray, labels, n_use=None) -> np.ndarray:
    """Posterior-averaged cross-entropy per point, (N,). The attack objective."""
    k = _check_n_use(ensemble, n_use)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.atleast_1d(labels)
    acc = np.zeros(X.shape[0])
    for i in range(k):
        logits = forward_batch(ensemble.arch, ensemble.samples[i], X)
        acc += cross_entropy_batch(logits, labels)
    return acc / k
