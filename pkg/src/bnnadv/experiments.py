"""Experiment harness: trains posteriors, mounts attacks, records results.

Four experiments are provided:

  grad_scan        expected-gradient components vs. number of posterior samples
  halfmoons_sweep  gradient magnitude across a capacity x data grid (HMC)
  attack_eval      adversarial accuracy table for rand / fgsm / pgd
  tradeoff_grid    accuracy vs. robustness scatter across many models

Every run writes results.csv (byte-stable for a fixed spec), manifest.json
(resolved config + dataset fingerprints), and records.jsonl (includes wall
times, the only non-reproducible field).
"""

from __future__ import annotations

import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats as scipy_stats

from . import __version__
from .attacks import ATTACKS, AttackConfig
from .datasets import Dataset, load_idx, make_half_moons, subsample
from .errors import ConfigError
from .inference import (
    HmcConfig,
    PosteriorEnsemble,
    SgdConfig,
    ViConfig,
    config_digest,
    hmc_sample,
    load_ensemble,
    save_ensemble,
    sgd_train,
    vi_fit,
    vi_sample,
)
from .metrics import accuracy, adversarial_accuracy, softmax_difference
from .nets import NetworkArch, grad_input_batch
from .predictive import expected_loss_gradient_batch

EXPERIMENTS = ("grad_scan", "halfmoons_sweep", "attack_eval", "tradeoff_grid")
DATASETS = ("halfmoons", "mnist", "fashion")
METHODS = ("hmc", "vi", "sgd")

# sub-stream tags for deriving independent generators from the base seed
_S_DATA, _S_TRAIN, _S_RAND, _S_FGSM, _S_PGD = 101, 102, 111, 112, 113
_ATTACK_STREAM = {"rand": _S_RAND, "fgsm": _S_FGSM, "pgd": _S_PGD}


def derive_seed(*parts) -> int:
    """Deterministic 63-bit child seed from integer stream parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved description of one experiment run. seed is mandatory."""

    experiment: str
    seed: int
    out_dir: str | None = None
    dataset: str = "halfmoons"
    method: str = "hmc"
    # data
    n_train: int = 2000
    n_test: int = 500
    noise_std: float = 0.1
    data_dir: str | None = None
    full_scale: bool = False
    # model
    hidden_sizes: tuple[int, ...] = (128, 128)
    activation: str | None = None  # default depends on dataset
    posterior_samples: int = 100
    # inference overrides (None -> per-dataset defaults)
    hmc: HmcConfig | None = None
    vi: ViConfig | None = None
    sgd: SgdConfig | None = None
    # attack
    epsilon: float = 0.1
    grad_samples: int = 100
    pgd_iterations: int = 15
    pgd_restarts: int = 1
    # grids
    n_use_grid: tuple[int, ...] = ()
    hidden_grid: tuple[int, ...] = (16, 64, 256)
    train_grid: tuple[int, ...] = (500, 2000, 8000)
    n_models: int = 30
    methods: tuple[str, ...] = ("hmc", "sgd")
    # evaluation sizes
    n_eval: int = 500
    n_points: int = 100
    # execution
    workers: int = 1
    keep_raw_components: bool | None = None
    ensemble_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}, expected one of {DATASETS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r} in methods")
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        for name in ("hidden_grid", "train_grid", "n_use_grid", "hidden_sizes", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.hidden_grid or not self.train_grid:
            raise ConfigError("grid axes must be non-empty")

    def digest(self) -> str:
        return config_digest(self)


@dataclass
class ResultRecord:
    experiment: str
    coords: dict
    metrics: dict
    seed: int
    config_hash: str
    wall_time_s: float = 0.0

    def __post_init__(self):
        for k, v in self.metrics.items():
            if isinstance(v, float) and not np.isfinite(v):
                raise ValueError(f"metric {k} is not finite: {v}")


# ---------------------------------------------------------------------------
# datasets


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def resolve_data_dir(spec: ExperimentSpec) -> str:
    if spec.data_dir:
        return spec.data_dir
    env = os.environ.get("BNNADV_DATA")
    if env:
        return os.path.join(env, spec.dataset)
    return os.path.join("data", spec.dataset)


def _find_idx(data_dir: str, base: str) -> str:
    for cand in (os.path.join(data_dir, base + ".gz"), os.path.join(data_dir, base)):
        if os.path.exists(cand):
            return cand
    raise ConfigError(
        f"IDX file {base}[.gz] not found under {data_dir!r}; point --data-dir or "
        f"BNNADV_DATA at a directory holding the standard MNIST-format files"
    )


def load_image_dataset(name: str, data_dir: str, part: str) -> Dataset:
    images, labels = _IDX_NAMES[part]
    return load_idx(_find_idx(data_dir, images), _find_idx(data_dir, labels), name=f"{name}-{part}")


def load_split(spec: ExperimentSpec) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) pair for the spec."""
    rng = np.random.default_rng([spec.seed, _S_DATA])
    if spec.dataset == "halfmoons":
        n_total = spec.n_train + spec.n_test
        data = make_half_moons(n_total + n_total % 2, spec.noise_std, rng)
        order = rng.permutation(len(data))
        tr, te = order[: spec.n_train], order[spec.n_train: spec.n_train + spec.n_test]
        mk = lambda idx, tag: Dataset(
            data.inputs[idx], data.labels[idx], 2, f"halfmoons-{tag}", None
        )
        return mk(tr, "train"), mk(te, "test")
    data_dir = resolve_data_dir(spec)
    train = load_image_dataset(spec.dataset, data_dir, "train")
    test = load_image_dataset(spec.dataset, data_dir, "test")
    if not spec.full_scale:
        if spec.n_train < len(train):
            train = subsample(train, spec.n_train, rng)
        if spec.n_test < len(test):
            test = subsample(test, spec.n_test, rng)
    return train, test


# ---------------------------------------------------------------------------
# posterior construction


def default_activation(spec: ExperimentSpec) -> str:
    # image nets follow the relu convention, half-moons the leaky one
    if spec.activation:
        return spec.activation
    return "leaky_relu" if spec.dataset == "halfmoons" else "relu"


def default_hmc_config(spec: ExperimentSpec) -> HmcConfig:
    if spec.hmc is not None:
        return spec.hmc
    if spec.dataset == "halfmoons":
        return HmcConfig(
            step_size=0.01,
            leapfrog_steps=10,
            warmup_samples=100,
            posterior_samples=spec.posterior_samples,
        )
    return HmcConfig(
        step_size=0.002,
        leapfrog_steps=10,
        warmup_samples=150,
        posterior_samples=spec.posterior_samples,
    )


def default_vi_config(spec: ExperimentSpec) -> ViConfig:
    if spec.vi is not None:
        return spec.vi
    if spec.dataset == "halfmoons":
        return ViConfig(learning_rate=0.01, epochs=100, batch_size=128)
    return ViConfig(learning_rate=0.01, epochs=40, batch_size=128)


def default_sgd_config(spec: ExperimentSpec) -> SgdConfig:
    if spec.sgd is not None:
        return spec.sgd
    return SgdConfig(learning_rate=0.05, epochs=5, batch_size=256)


def attack_config(spec: ExperimentSpec, train: Dataset) -> AttackConfig:
    clamp = train.bounds
    return AttackConfig(
        epsilon=spec.epsilon,
        pgd_iterations=spec.pgd_iterations,
        pgd_restarts=spec.pgd_restarts,
        clamp=clamp,
        grad_samples=spec.grad_samples,
    )


def train_posterior(spec: ExperimentSpec, arch: NetworkArch, train: Dataset, method: str, seed: int) -> PosteriorEnsemble:
    if method == "hmc":
        return hmc_sample(arch, train, default_hmc_config(spec), seed)
    if method == "vi":
        vp = vi_fit(arch, train, default_vi_config(spec), seed)
        return vi_sample(vp, spec.posterior_samples, derive_seed(seed, 1))
    if method == "sgd":
        return sgd_train(arch, train, default_sgd_config(spec), seed)
    raise ConfigError(f"unknown method {method!r}")


def training_seed(spec: ExperimentSpec) -> int:
    return derive_seed(spec.seed, _S_TRAIN)


def get_ensemble(spec: ExperimentSpec, arch: NetworkArch, train: Dataset) -> PosteriorEnsemble:
    """Train, or reuse a persisted posterior when spec.ensemble_dir holds one."""
    edir = spec.ensemble_dir
    if edir and os.path.exists(os.path.join(edir, "manifest.json")):
        ens = load_ensemble(edir)
        if ens.arch.param_count != arch.param_count or ens.arch != arch:
            raise ConfigError(
                f"ensemble at {edir} was trained for arch {ens.arch.describe()}, "
                f"spec wants {arch.describe()}"
            )
        return ens
    ens = train_posterior(spec, arch, train, spec.method, training_seed(spec))
    if edir:
        save_ensemble(ens, edir)
    return ens


# ---------------------------------------------------------------------------
# output files


def _csv_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(records: list[ResultRecord], path) -> None:
    """Stable schema: experiment, seed, config_hash, coords..., metrics...
    Wall times are deliberately excluded so reruns are byte-identical."""
    coord_keys = sorted({k for r in records for k in r.coords})
    metric_keys = sorted({k for r in records for k in r.metrics})
    with open(path, "w") as f:
        f.write(",".join(["experiment", "seed", "config_hash", *coord_keys, *metric_keys]) + "\n")
        for r in records:
            row = [r.experiment, str(r.seed), r.config_hash]
            row += [_csv_value(r.coords.get(k, "")) for k in coord_keys]
            row += [_csv_value(r.metrics.get(k, "")) for k in metric_keys]
            f.write(",".join(row) + "\n")


def write_records_jsonl(records: list[ResultRecord], path) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps({
                "experiment": r.experiment,
                "coords": r.coords,
                "metrics": r.metrics,
                "seed": r.seed,
                "config_hash": r.config_hash,
                "wall_time_s": r.wall_time_s,
            }, sort_keys=True) + "\n")


def _spec_as_jsonable(spec: ExperimentSpec) -> dict:
    d = asdict(spec)

    def conv(v):
        if isinstance(v, tuple):
            return list(v)
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return v

    return {k: conv(v) for k, v in d.items()}


def write_manifest(spec: ExperimentSpec, records, fingerprints: dict, out_dir, extras: dict | None = None) -> None:
    manifest = {
        "tool_version": __version__,
        "experiment": spec.experiment,
        "config": _spec_as_jsonable(spec),
        "config_hash": spec.digest(),
        "dataset_fingerprints": fingerprints,
        "files": {"results": "results.csv", "records": "records.jsonl"},
        "n_records": len(records),
    }
    if extras:
        manifest.update(extras)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def write_outputs(spec: ExperimentSpec, records, fingerprints, extras=None) -> None:
    if not spec.out_dir:
        return
    os.makedirs(spec.out_dir, exist_ok=True)
    write_results_csv(records, os.path.join(spec.out_dir, "results.csv"))
    write_records_jsonl(records, os.path.join(spec.out_dir, "records.jsonl"))
    write_manifest(spec, records, fingerprints, spec.out_dir, extras)


# ---------------------------------------------------------------------------
# experiment: grad_scan


def _component_stats(grads: np.ndarray) -> dict:
    flat = grads.ravel()
    absflat = np.abs(flat)
    return {
        "median_abs_component": float(np.median(absflat)),
        "mean_abs_component": float(np.mean(absflat)),
        "p05_component": float(np.percentile(flat, 5)),
        "p95_component": float(np.percentile(flat, 95)),
    }


def default_n_use_grid(n: int) -> tuple[int, ...]:
    marks = [m for m in (1, 10, 50, 100, 250, 500, 1000) if m <= n]
    if n not in marks:
        marks.append(n)
    return tuple(marks)


def run_grad_scan(spec: ExperimentSpec) -> list[ResultRecord]:
    t0 = time.time()
    train, test = load_split(spec)
    arch = NetworkArch(train.input_dim, spec.hidden_sizes, train.num_classes, default_activation(spec))
    ens = get_ensemble(spec, arch, train)
    pts = test.inputs[: spec.n_points]
    labs = test.labels[: spec.n_points]
    grid = spec.n_use_grid or default_n_use_grid(len(ens))
    grid = tuple(sorted(set(int(g) for g in grid)))
    if grid[-1] > len(ens):
        raise ConfigError(f"n_use grid maximum {grid[-1]} exceeds ensemble size {len(ens)}")

    records = []
    raw_rows = []
    keep_raw = spec.keep_raw_components
    if keep_raw is None:
        keep_raw = pts.shape[0] * pts.shape[1] <= 5000
    acc = np.zeros_like(pts)
    clean_acc = accuracy(ens, test)
    for i in range(grid[-1]):
        acc += grad_input_batch(arch, ens.samples[i], pts, labs)
        k = i + 1
        if k in grid:
            mean_grad = acc / k
            rec = ResultRecord(
                experiment="grad_scan",
                coords={"n_use": k},
                metrics={**_component_stats(mean_grad), "clean_accuracy": clean_acc},
                seed=spec.seed,
                config_hash=spec.digest(),
                wall_time_s=time.time() - t0,
            )
            records.append(rec)
            if keep_raw:
                for p in range(mean_grad.shape[0]):
                    for c in range(mean_grad.shape[1]):
                        raw_rows.append((k, p, c, mean_grad[p, c]))
    fps = {"train": train.fingerprint(), "test": test.fingerprint()}
    write_outputs(spec, records, fps, {"acceptance_rate": ens.acceptance_rate})
    if spec.out_dir and keep_raw:
        with open(os.path.join(spec.out_dir, "components.csv"), "w") as f:
            f.write("n_use,point,component,value\n")
            for row in raw_rows:
                f.write(f"{row[0]},{row[1]},{row[2]},{repr(row[3])}\n")
    return records


# ---------------------------------------------------------------------------
# experiment: halfmoons_sweep


def _halfmoons_cell(spec: ExperimentSpec, cell_index: int, hidden: int, m: int) -> ResultRecord:
    t0 = time.time()
    cell_seed = derive_seed(spec.seed, cell_index)
    rng = np.random.default_rng([cell_seed, _S_DATA])
    n_test = spec.n_test
    data = make_half_moons(m + n_test + (m + n_test) % 2, spec.noise_std, rng)
    order = rng.permutation(len(data))
    train = Dataset(data.inputs[order[:m]], data.labels[order[:m]], 2, "halfmoons-train")
    test_idx = order[m: m + n_test]
    test = Dataset(data.inputs[test_idx], data.labels[test_idx], 2, "halfmoons-test")
    arch = NetworkArch(2, (hidden,), 2, default_activation(spec))
    cell_spec = replace(spec, hidden_sizes=(hidden,), n_train=m)
    ens = hmc_sample(arch, train, default_hmc_config(cell_spec), derive_seed(cell_seed, _S_TRAIN))
    test_acc = accuracy(ens, test)
    grads = expected_loss_gradient_batch(ens, test.inputs, test.labels)
    metrics = {
        **_component_stats(grads),
        "test_accuracy": test_acc,
        "acceptance_rate": float(ens.acceptance_rate),
        "filtered": float(test_acc <= 0.8),
    }
    return ResultRecord(
        experiment="halfmoons_sweep",
        coords={"hidden": hidden, "n_train": m},
        metrics=metrics,
        seed=cell_seed,
        config_hash=spec.digest(),
        wall_time_s=time.time() - t0,
    )


def _halfmoons_cell_star(args):
    return _halfmoons_cell(*args)


def run_halfmoons_sweep(spec: ExperimentSpec) -> list[ResultRecord]:
    cells = [
        (spec, i, h, m)
        for i, (h, m) in enumerate(itertools.product(spec.hidden_grid, spec.train_grid))
    ]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_halfmoons_cell_star, cells))
    else:
        records = [_halfmoons_cell(*c) for c in cells]
    fps = {"generator": "halfmoons", "noise_std": repr(spec.noise_std)}
    write_outputs(spec, records, fps)
    return records


# ---------------------------------------------------------------------------
# experiment: attack_eval


def run_attack_eval(spec: ExperimentSpec) -> list[ResultRecord]:
    t0 = time.time()
    train, test = load_split(spec)
    arch = NetworkArch(train.input_dim, spec.hidden_sizes, train.num_classes, default_activation(spec))
    ens = get_ensemble(spec, arch, train)
    n_eval = min(spec.n_eval, len(test))
    evalset = Dataset(
        test.inputs[:n_eval], test.labels[:n_eval], test.num_classes, test.name, test.bounds
    )
    cfg = attack_config(spec, train)
    clean = accuracy(ens, evalset)
    metrics = {"clean_accuracy": clean, "epsilon": spec.epsilon}
    for name in ("rand", "fgsm", "pgd"):
        metrics[f"adv_accuracy_{name}"] = adversarial_accuracy(
            ens, evalset, ATTACKS[name], cfg, derive_seed(spec.seed, _ATTACK_STREAM[name])
        )
    rec = ResultRecord(
        experiment="attack_eval",
        coords={"dataset": spec.dataset, "method": spec.method},
        metrics=metrics,
        seed=spec.seed,
        config_hash=spec.digest(),
        wall_time_s=time.time() - t0,
    )
    fps = {"train": train.fingerprint(), "test": test.fingerprint()}
    write_outputs(spec, [rec], fps, {"acceptance_rate": ens.acceptance_rate})
    return [rec]


# ---------------------------------------------------------------------------
# experiment: tradeoff_grid


def tradeoff_model_grid(spec: ExperimentSpec, method: str) -> list[dict]:
    """Deterministic list of n_models model configs with accuracy spread."""
    if method == "sgd":
        axes = itertools.product(
            (16, 64, 256, 1024),  # width
            (1, 2),  # depth
            (1, 3, 5, 10),  # epochs
            (0.001, 0.01),  # lr
        )
        combos = [
            {"width": w, "depth": d, "epochs": e, "lr": lr} for w, d, e, lr in axes
        ]
    else:  # hmc / vi share the architecture axes
        axes = itertools.product(
            (8, 16, 32, 64, 128),  # width
            (1, 2),  # depth
            (20, 50, 100),  # warmup (hmc) / epochs scale (vi)
        )
        combos = [{"width": w, "depth": d, "budget": b} for w, d, b in axes]
    reps = -(-spec.n_models // len(combos))  # ceil
    combos = (combos * reps)[: spec.n_models]
    return combos


def _tradeoff_cell(spec: ExperimentSpec, method: str, index: int, combo: dict) -> ResultRecord:
    t0 = time.time()
    seed = derive_seed(spec.seed, METHODS.index(method), index)
    train, test = load_split(spec)
    n_rob = min(spec.n_points, len(test))
    arch = NetworkArch(
        train.input_dim,
        (combo["width"],) * combo["depth"],
        train.num_classes,
        default_activation(spec),
    )
    if method == "sgd":
        cfg = SgdConfig(learning_rate=combo["lr"], epochs=combo["epochs"], batch_size=256)
        ens = sgd_train(arch, train, cfg, seed)
    elif method == "hmc":
        base = default_hmc_config(spec)
        cfg = replace(
            base,
            warmup_samples=combo["budget"],
            posterior_samples=min(spec.posterior_samples, 75),
        )
        ens = hmc_sample(arch, train, cfg, seed)
    else:  # vi
        base = default_vi_config(spec)
        cfg = replace(base, epochs=max(1, combo["budget"] // 4))
        vp = vi_fit(arch, train, cfg, seed)
        ens = vi_sample(vp, min(spec.posterior_samples, 75), derive_seed(seed, 1))
    acc = accuracy(ens, test)
    atk = attack_config(spec, train)
    X = test.inputs[:n_rob]
    y = test.labels[:n_rob]
    x_adv = ATTACKS["fgsm"](ens, X, y, atk, derive_seed(seed, _S_FGSM))
    sd = softmax_difference(ens, X, x_adv)
    metrics = {
        "accuracy": acc,
        "softmax_difference": sd,
        "robustness": 1.0 - sd,
        "n_params": float(arch.param_count),
    }
    if ens.acceptance_rate is not None:
        metrics["acceptance_rate"] = float(ens.acceptance_rate)
    coords = {"method": method, "model": index, "width": combo["width"], "depth": combo["depth"]}
    return ResultRecord(
        experiment="tradeoff_grid",
        coords=coords,
        metrics=metrics,
        seed=seed,
        config_hash=spec.digest(),
        wall_time_s=time.time() - t0,
    )


def _tradeoff_cell_star(args):
    return _tradeoff_cell(*args)


def tradeoff_correlations(records: list[ResultRecord]) -> dict:
    """Pearson and Spearman correlation of accuracy vs robustness per method."""
    out = {}
    methods = sorted({r.coords["method"] for r in records})
    for m in methods:
        acc = np.array([r.metrics["accuracy"] for r in records if r.coords["method"] == m])
        rob = np.array([r.metrics["robustness"] for r in records if r.coords["method"] == m])
        if len(acc) < 2 or np.std(acc) == 0 or np.std(rob) == 0:
            out[m] = {"pearson": 0.0, "spearman": 0.0, "n": int(len(acc))}
            continue
        pear = float(np.corrcoef(acc, rob)[0, 1])
        spear = float(scipy_stats.spearmanr(acc, rob).statistic)
        out[m] = {"pearson": pear, "spearman": spear, "n": int(len(acc))}
    return out


def run_tradeoff_grid(spec: ExperimentSpec) -> list[ResultRecord]:
    cells = []
    for method in spec.methods:
        for i, combo in enumerate(tradeoff_model_grid(spec, method)):
            cells.append((spec, method, i, combo))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_tradeoff_cell_star, cells))
    else:
        records = [_tradeoff_cell(*c) for c in cells]
    corr = tradeoff_correlations(records)
    train, test = load_split(spec)
    fps = {"train": train.fingerprint(), "test": test.fingerprint()}
    write_outputs(spec, records, fps, {"correlations": corr})
    return records


RUNNERS = {
    "grad_scan": run_grad_scan,
    "halfmoons_sweep": run_halfmoons_sweep,
    "attack_eval": run_attack_eval,
    "tradeoff_grid": run_tradeoff_grid,
}


def run_experiment(spec: ExperimentSpec) -> list[ResultRecord]:
    return RUNNERS[spec.experiment](spec)
