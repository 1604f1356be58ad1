"""Evaluation metrics for attacked ensembles."""

from __future__ import annotations

import numpy as np

from .datasets import Dataset
from .inference import PosteriorEnsemble
from .predictive import predict_labels_batch, predict_probs_batch


def accuracy(ensemble: PosteriorEnsemble, data: Dataset, n_use=None) -> float:
    pred = predict_labels_batch(ensemble, data.inputs, n_use)
    return float(np.mean(pred == data.labels))


def adversarial_accuracy(ensemble: PosteriorEnsemble, testset: Dataset, attack_fn, cfg, seed=0) -> float:
    """Fraction of test points still classified as their true label after attack.

    attack_fn follows the batched registry signature
    (ensemble, X, labels, cfg, seed) -> X_adv.
    """
    x_adv = attack_fn(ensemble, testset.inputs, testset.labels, cfg, seed)
    pred = predict_labels_batch(ensemble, x_adv)
    return float(np.mean(pred == testset.labels))


def softmax_difference(ensemble: PosteriorEnsemble, X: np.ndarray, X_adv: np.ndarray, n_use=None) -> float:
    """Mean l-inf distance between clean and attacked predictive probabilities.

    Robustness is reported as 1 minus this value.
    """
    p_clean = predict_probs_batch(ensemble, X, n_use)
    p_adv = predict_probs_batch(ensemble, X_adv, n_use)
    return float(np.mean(np.max(np.abs(p_clean - p_adv), axis=1)))
