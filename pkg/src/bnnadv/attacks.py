"""Adversarial candidate generation against the ensemble predictive.

All attacks obey the l-inf budget exactly: every output satisfies
max|x_adv - x| <= epsilon, and clamp bounds (when set) are applied last.
sgn(0) = 0 throughout, so components with a dead expected gradient are left
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .inference import PosteriorEnsemble
from .predictive import ensemble_mean_loss_batch, expected_loss_gradient_batch

_RESAMPLE_STREAM = 0x5EED


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    pgd_alpha: float | None = None  # defaults to epsilon / 4
    pgd_iterations: int = 15
    pgd_restarts: int = 1
    clamp: tuple[float, float] | None = None
    grad_samples: int = 100
    resample_per_iter: bool = False  # fresh posterior subset per PGD step

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.pgd_alpha is None:
            object.__setattr__(self, "pgd_alpha", self.epsilon / 4.0)
        if self.epsilon > 0 and self.pgd_alpha <= 0:
            raise ConfigError(f"pgd_alpha must be > 0, got {self.pgd_alpha}")
        if self.pgd_iterations < 1:
            raise ConfigError(f"pgd_iterations must be >= 1, got {self.pgd_iterations}")
        if self.pgd_restarts < 1:
            raise ConfigError(f"pgd_restarts must be >= 1, got {self.pgd_restarts}")
        if self.grad_samples < 1:
            raise ConfigError(f"grad_samples must be >= 1, got {self.grad_samples}")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise ConfigError(f"clamp bounds must satisfy lo < hi, got {self.clamp}")


def project_linf(candidate: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    """Componentwise clip into the l-inf ball around center. Idempotent."""
    candidate = np.asarray(candidate, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    return np.clip(candidate, center - epsilon, center + epsilon)


def _clamp(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.clamp is None:
        return x
    return np.clip(x, cfg.clamp[0], cfg.clamp[1])


def _n_grad(ensemble: PosteriorEnsemble, cfg: AttackConfig) -> int:
    return min(cfg.grad_samples, len(ensemble))


def fgsm_batch(ensemble: PosteriorEnsemble, X: np.ndarray, labels, cfg: AttackConfig, seed=None) -> np.ndarray:
    """One epsilon-step along the sign of the expected loss gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    g = expected_loss_gradient_batch(ensemble, X, labels, _n_grad(ensemble, cfg))
    return _clamp(X + cfg.epsilon * np.sign(g), cfg)


def fgsm(ensemble: PosteriorEnsemble, x: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    return fgsm_batch(ensemble, np.asarray(x)[None, :], [label], cfg)[0]


def _pgd_from_noise(ensemble, X, labels, cfg, init_noise, rng):
    """Shared PGD core. init_noise has shape (restarts, N, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.atleast_1d(labels)
    k = _n_grad(ensemble, cfg)
    n_total = len(ensemble)
    best = X.copy()
    best_loss = np.full(X.shape[0], -np.inf)
    for r in range(cfg.pgd_restarts):
        cur = _clamp(X + init_noise[r], cfg)
        for _ in range(cfg.pgd_iterations):
            if cfg.resample_per_iter:
                idx = rng.choice(n_total, size=k, replace=False)
                g = expected_loss_gradient_batch(ensemble, cur, labels, sample_indices=idx)
            else:
                g = expected_loss_gradient_batch(ensemble, cur, labels, k)
            cur = _clamp(project_linf(cur + cfg.pgd_alpha * np.sign(g), X, cfg.epsilon), cfg)
        loss = ensemble_mean_loss_batch(ensemble, cur, labels, k)
        gain = loss > best_loss
        best[gain] = cur[gain]
        best_loss[gain] = loss[gain]
    return best


def pgd(ensemble: PosteriorEnsemble, x: np.ndarray, label: int, cfg: AttackConfig, rng=None) -> np.ndarray:
    """Projected gradient descent from a random start inside the epsilon-ball."""
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    noise = rng.uniform(-cfg.epsilon, cfg.epsilon, size=(cfg.pgd_restarts, 1, x.size))
    return _pgd_from_noise(ensemble, x[None, :], [label], cfg, noise, rng)[0]


def pgd_batch(ensemble: PosteriorEnsemble, X: np.ndarray, labels, cfg: AttackConfig, seed=0) -> np.ndarray:
    """Batched PGD; point i draws its start noise from generator (seed, i), so
    results match the per-point call regardless of batch composition."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    noise = np.empty((cfg.pgd_restarts, n, d))
    for i in range(n):
        point_rng = np.random.default_rng([int(seed), i])
        noise[:, i, :] = point_rng.uniform(-cfg.epsilon, cfg.epsilon, size=(cfg.pgd_restarts, d))
    shared_rng = np.random.default_rng([int(seed), _RESAMPLE_STREAM])
    return _pgd_from_noise(ensemble, X, labels, cfg, noise, shared_rng)


def random_sign_attack(x: np.ndarray, epsilon: float, rng=None, clamp=None) -> np.ndarray:
    """Each component moves by +eps or -eps with equal probability."""
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    signs = rng.integers(0, 2, size=x.shape) * 2 - 1
    out = x + epsilon * signs
    if clamp is not None:
        out = np.clip(out, clamp[0], clamp[1])
    return out


def random_sign_batch(ensemble, X: np.ndarray, labels, cfg: AttackConfig, seed=0) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        out[i] = random_sign_attack(
            X[i], cfg.epsilon, np.random.default_rng([int(seed), i]), cfg.clamp
        )
    return out


# registry used by the evaluation harness; common batched signature
ATTACKS = {
    "rand": random_sign_batch,
    "fgsm": fgsm_batch,
    "pgd": pgd_batch,
}
