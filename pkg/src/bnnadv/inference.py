"""Posterior construction: HMC sampling, mean-field VI, and an SGD baseline.

All three trainers are deterministic functions of (seed, config, data).
The HMC chain and the VI loop are exposed in generic form (arbitrary
potential / log-likelihood callables) so their statistical behaviour can be
validated against analytically known targets.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, DiagnosticError, NumericsError
from .nets import (
    NetworkArch,
    check_finite,
    cross_entropy_batch,
    forward_batch,
    grad_weights,
    init_weights,
)
from .weights_io import arch_from_dict, arch_to_dict, dump_weights, load_weights


def softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def config_digest(*parts) -> str:
    """Stable short hash of configuration material (dicts, dataclasses, scalars)."""

    def norm(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: norm(getattr(obj, k)) for k in sorted(obj.__dataclass_fields__)}
        if isinstance(obj, dict):
            return {str(k): norm(v) for k, v in sorted(obj.items())}
        if isinstance(obj, (list, tuple)):
            return [norm(v) for v in obj]
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        return obj

    blob = json.dumps([norm(p) for p in parts], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class HmcConfig:
    step_size: float
    leapfrog_steps: int
    warmup_samples: int
    posterior_samples: int
    prior_std: float = 1.0
    thinning: int = 1

    def __post_init__(self):
        if self.step_size <= 0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")
        if self.leapfrog_steps < 1:
            raise ConfigError(f"leapfrog_steps must be >= 1, got {self.leapfrog_steps}")
        if self.warmup_samples < 0:
            raise ConfigError(f"warmup_samples must be >= 0, got {self.warmup_samples}")
        if self.posterior_samples < 1:
            raise ConfigError(f"posterior_samples must be >= 1, got {self.posterior_samples}")
        if self.prior_std <= 0:
            raise ConfigError(f"prior_std must be > 0, got {self.prior_std}")
        if self.thinning < 1:
            raise ConfigError(f"thinning must be >= 1, got {self.thinning}")


@dataclass(frozen=True)
class ViConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    elbo_mc_samples: int = 1
    prior_std: float = 1.0
    rho_init: float = -5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.elbo_mc_samples < 1:
            raise ConfigError(f"elbo_mc_samples must be >= 1, got {self.elbo_mc_samples}")
        if self.prior_std <= 0:
            raise ConfigError(f"prior_std must be > 0, got {self.prior_std}")


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class PosteriorEnsemble:
    """n weight samples standing in for the posterior; immutable by convention."""

    arch: NetworkArch
    samples: np.ndarray  # (n, param_count)
    method: str  # hmc | vi | point
    seed: int
    config_hash: str
    acceptance_rate: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] < 1:
            raise ValueError("ensemble needs at least one sample")
        if self.samples.shape[1] != self.arch.param_count:
            raise ValueError(
                f"samples have {self.samples.shape[1]} params, arch needs {self.arch.param_count}"
            )
        if self.method == "point" and self.samples.shape[0] != 1:
            raise ValueError("a point ensemble must hold exactly one sample")
        check_finite(self.samples, "ensemble samples")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class VariationalPosterior:
    """Diagonal Gaussian over weights; std = softplus(rho)."""

    arch: NetworkArch
    mu: np.ndarray
    rho: np.ndarray
    elbo_trace: list[float] = field(default_factory=list)
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        expect = (self.arch.param_count,)
        if self.mu.shape != expect or self.rho.shape != expect:
            raise ValueError(f"mu/rho must have shape {expect}")
        check_finite(self.mu, "variational mu")
        check_finite(self.rho, "variational rho")

    @property
    def std(self) -> np.ndarray:
        return softplus(self.rho)


# ---------------------------------------------------------------------------
# log posterior


def log_posterior(arch: NetworkArch, w: np.ndarray, data: Dataset, prior_std: float) -> float:
    """Unnormalized: summed log-likelihood minus the Gaussian prior penalty."""
    if len(data) < 1:
        raise ValueError("empty dataset")
    logits = forward_batch(arch, w, data.inputs)
    loglik = -float(cross_entropy_batch(logits, data.labels).sum())
    w = np.asarray(w)
    return loglik - float(w @ w) / (2.0 * prior_std**2)


def log_posterior_grad(arch: NetworkArch, w: np.ndarray, data: Dataset, prior_std: float) -> np.ndarray:
    n = len(data)
    g_loglik = -n * grad_weights(arch, w, data.inputs, data.labels)
    return g_loglik - np.asarray(w) / prior_std**2


# ---------------------------------------------------------------------------
# HMC


def leapfrog(q, p, step_size, steps, grad_fn):
    """Stormer-Verlet integration of Hamiltonian dynamics.

    grad_fn must return the gradient of the potential energy (i.e. of the
    negative log target). A non-finite gradient raises NumericsError so the
    caller can reject the trajectory.
    """
    q = np.array(q, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"position {q.shape} and momentum {p.shape} differ")
    if steps == 0:
        return q, p

    def grad(x):
        g = np.asarray(grad_fn(x), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericsError("non-finite potential gradient; trajectory aborted")
        return g

    p = p - 0.5 * step_size * grad(q)
    for i in range(steps):
        q = q + step_size * p
        g = grad(q)
        if i < steps - 1:
            p = p - step_size * g
    p = p - 0.5 * step_size * g
    return q, p


def hmc_chain(q0, potential, grad_potential, cfg: HmcConfig, rng=None, keep_energies: bool = False):
    """Generic HMC over an arbitrary potential (negative log density).

    Returns (samples, acceptance_rate, diagnostics). The acceptance rate is
    computed over post-warmup iterations; a chain that accepts nothing after
    warmup raises DiagnosticError. diagnostics holds per-iteration
    (H_current, H_proposed, accept_prob, accepted) tuples when requested.
    """
    rng = np.random.default_rng(rng)
    q = np.array(q0, dtype=np.float64)
    dim = q.size
    u_cur = float(potential(q))
    if not np.isfinite(u_cur):
        raise NumericsError("potential is non-finite at the initial point")
    total = cfg.warmup_samples + cfg.posterior_samples * cfg.thinning
    samples = np.empty((cfg.posterior_samples, dim))
    kept = 0
    accepted_post = 0
    energies = [] if keep_energies else None
    for it in range(total):
        p = rng.standard_normal(dim)
        h_cur = u_cur + 0.5 * float(p @ p)
        try:
            q_new, p_new = leapfrog(q, p, cfg.step_size, cfg.leapfrog_steps, grad_potential)
            u_new = float(potential(q_new))
            h_new = u_new + 0.5 * float(p_new @ p_new)
            if not np.isfinite(h_new):
                raise NumericsError("non-finite proposal energy")
            accept_prob = min(1.0, float(np.exp(min(h_cur - h_new, 0.0))))
        except NumericsError:
            h_new = np.inf
            accept_prob = 0.0
        accepted = rng.uniform() < accept_prob
        if accepted:
            q, u_cur = q_new, u_new
        if keep_energies:
            energies.append((h_cur, h_new, accept_prob, accepted))
        if it >= cfg.warmup_samples:
            accepted_post += int(accepted)
            if (it - cfg.warmup_samples + 1) % cfg.thinning == 0:
                samples[kept] = q
                kept += 1
    n_post = cfg.posterior_samples * cfg.thinning
    rate = accepted_post / n_post if n_post else 0.0
    if n_post and accepted_post == 0:
        raise DiagnosticError(
            f"HMC chain rejected all {n_post} post-warmup proposals "
            f"(step_size={cfg.step_size}); posterior is unusable"
        )
    return samples, rate, energies


def hmc_sample(arch: NetworkArch, data: Dataset, cfg: HmcConfig, seed: int) -> PosteriorEnsemble:
    """Sample the weight posterior with full-batch HMC, chain started at he-init."""
    rng = np.random.default_rng(seed)
    q0 = init_weights(arch, "he", rng)
    var = cfg.prior_std**2
    n = len(data)
    X, y = data.inputs, data.labels

    def potential(w):
        logits = forward_batch(arch, w, X)
        return float(cross_entropy_batch(logits, y).sum()) + float(w @ w) / (2.0 * var)

    def grad_potential(w):
        return n * grad_weights(arch, w, X, y) + w / var

    samples, rate, _ = hmc_chain(q0, potential, grad_potential, cfg, rng)
    check_finite(samples, "hmc samples")
    return PosteriorEnsemble(
        arch,
        samples,
        method="hmc",
        seed=seed,
        config_hash=config_digest(cfg, arch_to_dict(arch)),
        acceptance_rate=rate,
        info={"chain_init": "he", "chains": 1},
    )


def effective_sample_size(chain: np.ndarray) -> float:
    """Univariate ESS via Geyer's initial positive sequence."""
    x = np.asarray(chain, dtype=np.float64)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    s = 0.0
    for k in range(1, n // 2):
        pair = rho[2 * k - 1] + rho[2 * k]
        if pair < 0:
            break
        s += pair
    return float(n / (1.0 + 2.0 * s))


# ---------------------------------------------------------------------------
# VI (mean-field Gaussian, reparameterized gradient ascent on the ELBO)


def _kl_gaussian(mu, rho, prior_std):
    s = softplus(rho)
    return float(
        np.sum(np.log(prior_std / s) + (s**2 + mu**2) / (2.0 * prior_std**2) - 0.5)
    )


def fit_meanfield(dim, n_data, loglik_grad, cfg: ViConfig, rng=None, mu0=None, rho0=None):
    """Generic mean-field VI loop.

    loglik_grad(w, indices) must return the summed log-likelihood over the
    indexed data points and its gradient w.r.t. w. Steps are plain gradient
    ascent on the per-datum objective  mean loglik - KL/N,  which keeps the
    configured learning rate on the familiar SGD scale. Returns
    (mu, rho, per-epoch ELBO trace at full-dataset scale).
    """
    rng = np.random.default_rng(rng)
    mu = np.zeros(dim) if mu0 is None else np.array(mu0, dtype=np.float64)
    rho = np.full(dim, cfg.rho_init) if rho0 is None else np.array(rho0, dtype=np.float64)
    n = int(n_data)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        batch_elbos = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            b = idx.size
            s = softplus(rho)
            sig = _sigmoid(rho)
            g_mu = np.zeros(dim)
            g_rho = np.zeros(dim)
            ll_acc = 0.0
            for _ in range(cfg.elbo_mc_samples):
                eps = rng.standard_normal(dim)
                w = mu + s * eps
                ll, g = loglik_grad(w, idx)
                ll_acc += ll
                g_mu += g / b
                g_rho += (g / b) * eps * sig
            mc = cfg.elbo_mc_samples
            kl = _kl_gaussian(mu, rho, cfg.prior_std)
            d_kl_mu = mu / cfg.prior_std**2
            d_kl_rho = (s / cfg.prior_std**2 - 1.0 / s) * sig
            mu = mu + cfg.learning_rate * (g_mu / mc - d_kl_mu / n)
            rho = rho + cfg.learning_rate * (g_rho / mc - d_kl_rho / n)
            elbo = (n / b) * (ll_acc / mc) - kl
            if not np.isfinite(elbo) or not (np.all(np.isfinite(mu)) and np.all(np.isfinite(rho))):
                raise DiagnosticError(f"VI diverged: non-finite ELBO/parameters (elbo={elbo})")
            batch_elbos.append(elbo)
        trace.append(float(np.mean(batch_elbos)))
    return mu, rho, trace


def vi_fit(arch: NetworkArch, data: Dataset, cfg: ViConfig, seed: int) -> VariationalPosterior:
    rng = np.random.default_rng(seed)
    mu0 = init_weights(arch, "he", rng)
    X, y = data.inputs, data.labels

    def loglik_grad(w, idx):
        xb, yb = X[idx], y[idx]
        logits = forward_batch(arch, w, xb)
        ll = -float(cross_entropy_batch(logits, yb).sum())
        g = -idx.size * grad_weights(arch, w, xb, yb)
        return ll, g

    mu, rho, trace = fit_meanfield(arch.param_count, len(data), loglik_grad, cfg, rng, mu0=mu0)
    return VariationalPosterior(
        arch, mu, rho, trace, seed=seed, config_hash=config_digest(cfg, arch_to_dict(arch))
    )


def vi_sample(vp: VariationalPosterior, n: int, seed: int) -> PosteriorEnsemble:
    """n reparameterized draws mu + softplus(rho) * eps."""
    if n < 1:
        raise ConfigError(f"need n >= 1 samples, got {n}")
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, vp.mu.size))
    samples = vp.mu[None, :] + vp.std[None, :] * eps
    return PosteriorEnsemble(
        vp.arch,
        samples,
        method="vi",
        seed=seed,
        config_hash=vp.config_hash,
        info={"elbo_trace": list(vp.elbo_trace)},
    )


# ---------------------------------------------------------------------------
# SGD baseline


def sgd_train(arch: NetworkArch, data: Dataset, cfg: SgdConfig, seed: int) -> PosteriorEnsemble:
    """Plain minibatch SGD on the mean cross-entropy; a single-point 'ensemble'."""
    rng = np.random.default_rng(seed)
    w = init_weights(arch, "he", rng)
    X, y = data.inputs, data.labels
    n = len(data)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            w = w - cfg.learning_rate * grad_weights(arch, w, X[idx], y[idx])
            check_finite(w, "sgd weights")
    return PosteriorEnsemble(
        arch,
        w[None, :],
        method="point",
        seed=seed,
        config_hash=config_digest(cfg, arch_to_dict(arch)),
    )


# ---------------------------------------------------------------------------
# ensemble persistence


def save_ensemble(ensemble: PosteriorEnsemble, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for i in range(len(ensemble)):
        fname = f"sample_{i:04d}.brwv"
        dump_weights(ensemble.arch, ensemble.samples[i], os.path.join(out_dir, fname))
        files.append(fname)
    manifest = {
        "method": ensemble.method,
        "arch": arch_to_dict(ensemble.arch),
        "seed": ensemble.seed,
        "config_hash": ensemble.config_hash,
        "acceptance_rate": ensemble.acceptance_rate,
        "n_samples": len(ensemble),
        "files": files,
        "info": {k: v for k, v in ensemble.info.items() if _json_safe(v)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _json_safe(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def load_ensemble(in_dir) -> PosteriorEnsemble:
    with open(os.path.join(in_dir, "manifest.json")) as f:
        manifest = json.load(f)
    arch = arch_from_dict(manifest["arch"])
    samples = np.empty((manifest["n_samples"], arch.param_count))
    for i, fname in enumerate(manifest["files"]):
        file_arch, w = load_weights(os.path.join(in_dir, fname))
        if file_arch != arch:
            raise ValueError(f"{fname} was written for arch {file_arch.describe()}")
        samples[i] = w
    return PosteriorEnsemble(
        arch,
        samples,
        method=manifest["method"],
        seed=manifest["seed"],
        config_hash=manifest["config_hash"],
        acceptance_rate=manifest.get("acceptance_rate"),
        info=manifest.get("info", {}),
    )
