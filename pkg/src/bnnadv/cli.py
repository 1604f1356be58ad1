"""Command-line entry point.

Subcommands: train, attack, grad-scan, halfmoons-sweep, attack-eval,
tradeoff-grid, report. A flat INI config file (--config) can provide any
value; every key also has a CLI flag which takes precedence. Exit codes:
0 success, 2 configuration error, 3 diagnostic failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys

import numpy as np
from dataclasses import replace

from .attacks import ATTACKS
from .datasets import Dataset
from .errors import ConfigError, DiagnosticError
from .experiments import (
    ExperimentSpec,
    attack_config,
    default_activation,
    derive_seed,
    get_ensemble,
    load_split,
    run_experiment,
    tradeoff_correlations,
    train_posterior,
    training_seed,
    write_outputs,
)
from .inference import HmcConfig, SgdConfig, ViConfig, load_ensemble, save_ensemble
from .metrics import accuracy, adversarial_accuracy, softmax_difference
from .nets import NetworkArch
from .svgplot import emit_svg_scatter

_EXP_BY_COMMAND = {
    "grad-scan": "grad_scan",
    "halfmoons-sweep": "halfmoons_sweep",
    "attack-eval": "attack_eval",
    "tradeoff-grid": "tradeoff_grid",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file; CLI flags override its values")
    p.add_argument("--seed", type=int, help="base RNG seed (mandatory, here or in config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dataset", choices=("halfmoons", "mnist", "fashion"))
    p.add_argument("--method", choices=("hmc", "vi", "sgd"))
    p.add_argument("--epsilon", type=float, help="attack strength (l-inf radius)")
    p.add_argument("--full-scale", action="store_true", default=None,
                   help="use the full dataset instead of desk-scale subsets")
    p.add_argument("--data-dir", help="directory with IDX files for image datasets")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--noise-std", type=float, help="half-moons noise")
    p.add_argument("--hidden", help="comma-separated hidden layer sizes, e.g. 128,128")
    p.add_argument("--activation", choices=("relu", "leaky_relu", "tanh", "sigmoid"))
    p.add_argument("--posterior-samples", type=int)
    p.add_argument("--grad-samples", type=int)
    p.add_argument("--pgd-iterations", type=int)
    p.add_argument("--pgd-restarts", type=int)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--n-points", type=int)
    p.add_argument("--n-models", type=int)
    p.add_argument("--hidden-grid", help="comma-separated widths for sweeps")
    p.add_argument("--train-grid", help="comma-separated training sizes for sweeps")
    p.add_argument("--n-use-grid", help="comma-separated sample counts for grad scans")
    p.add_argument("--methods", help="comma-separated methods for the tradeoff grid")
    p.add_argument("--workers", type=int)
    p.add_argument("--ensemble-dir", help="directory holding / receiving a saved posterior")
    p.add_argument("--prior-std", type=float)
    p.add_argument("--hmc-step-size", type=float)
    p.add_argument("--hmc-leapfrog-steps", type=int)
    p.add_argument("--hmc-warmup-samples", type=int)
    p.add_argument("--hmc-thinning", type=int)
    p.add_argument("--vi-learning-rate", type=float)
    p.add_argument("--vi-epochs", type=int)
    p.add_argument("--vi-batch-size", type=int)
    p.add_argument("--vi-elbo-mc-samples", type=int)
    p.add_argument("--vi-rho-init", type=float)
    p.add_argument("--sgd-learning-rate", type=float)
    p.add_argument("--sgd-epochs", type=int)
    p.add_argument("--sgd-batch-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bnnadv", description="Bayesian neural nets vs. gradient-based attacks"
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, help_text in (
        ("train", "train one posterior / model and persist it"),
        ("attack", "attack a saved posterior on a test subset"),
        ("grad-scan", "expected-gradient magnitude vs. posterior sample count"),
        ("halfmoons-sweep", "gradient magnitude across a capacity x data grid"),
        ("attack-eval", "adversarial accuracy table for rand/fgsm/pgd"),
        ("tradeoff-grid", "accuracy vs. robustness over a model grid"),
        ("report", "render SVG plots and a summary from a results directory"),
    ):
        p = sub.add_parser(cmd, help=help_text)
        if cmd == "report":
            p.add_argument("--out", required=True, help="results directory to report on")
        else:
            _add_common(p)
            if cmd == "attack":
                p.add_argument("--attack", choices=("rand", "fgsm", "pgd"), default="fgsm")
    return ap


def _parse_int_tuple(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if str(v).strip())


def _read_config(path) -> dict:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return {section: dict(cp[section]) for section in cp.sections()}


_SPEC_KEYS = {
    # spec field -> (config key, converter)
    "seed": ("seed", int),
    "out_dir": ("out", str),
    "dataset": ("dataset", str),
    "method": ("method", str),
    "epsilon": ("epsilon", float),
    "full_scale": ("full_scale", lambda v: str(v).lower() in ("1", "true", "yes")),
    "data_dir": ("data_dir", str),
    "n_train": ("n_train", int),
    "n_test": ("n_test", int),
    "noise_std": ("noise_std", float),
    "hidden_sizes": ("hidden", _parse_int_tuple),
    "activation": ("activation", str),
    "posterior_samples": ("posterior_samples", int),
    "grad_samples": ("grad_samples", int),
    "pgd_iterations": ("pgd_iterations", int),
    "pgd_restarts": ("pgd_restarts", int),
    "n_eval": ("n_eval", int),
    "n_points": ("n_points", int),
    "n_models": ("n_models", int),
    "hidden_grid": ("hidden_grid", _parse_int_tuple),
    "train_grid": ("train_grid", _parse_int_tuple),
    "n_use_grid": ("n_use_grid", _parse_int_tuple),
    "methods": ("methods", lambda v: tuple(str(v).split(","))),
    "workers": ("workers", int),
    "ensemble_dir": ("ensemble_dir", str),
}

_HMC_KEYS = {
    "step_size": float, "leapfrog_steps": int, "warmup_samples": int,
    "posterior_samples": int, "prior_std": float, "thinning": int,
}
_VI_KEYS = {
    "learning_rate": float, "epochs": int, "batch_size": int,
    "elbo_mc_samples": int, "prior_std": float, "rho_init": float,
}
_SGD_KEYS = {"learning_rate": float, "epochs": int, "batch_size": int}


def _merge_value(args, cfg_section: dict, cli_name: str, cfg_key: str):
    cli_val = getattr(args, cli_name, None)
    if cli_val is not None:
        return cli_val
    return cfg_section.get(cfg_key)


def build_spec(args, experiment: str) -> ExperimentSpec:
    cfg = _read_config(args.config) if getattr(args, "config", None) else {}
    exp_section = cfg.get("experiment", {})
    values = {"experiment": experiment}
    for field_name, (key, conv) in _SPEC_KEYS.items():
        raw = _merge_value(args, field_name if field_name != "out_dir" else "out", exp_section, key)
        if raw is not None:
            values[field_name] = raw if isinstance(raw, (tuple, bool)) else conv(raw)
    if "seed" not in values:
        raise ConfigError("--seed is mandatory (flag or [experiment] seed in the config file)")
    try:
        base = ExperimentSpec(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None

    def overrides(section_name, keys, prefix):
        found = {}
        for key, conv in keys.items():
            raw = cfg.get(section_name, {}).get(key)
            flag = getattr(args, f"{prefix}_{key}", None)
            if flag is None and key == "prior_std":
                flag = getattr(args, "prior_std", None)
            if flag is not None:
                raw = flag
            if raw is not None:
                found[key] = conv(raw)
        return found

    # partial overrides merge into the per-dataset defaults
    from .experiments import default_hmc_config, default_sgd_config, default_vi_config

    patch = {}
    ov = overrides("hmc", _HMC_KEYS, "hmc")
    if ov:
        patch["hmc"] = replace(default_hmc_config(base), **ov)
    ov = overrides("vi", _VI_KEYS, "vi")
    if ov:
        patch["vi"] = replace(default_vi_config(base), **ov)
    ov = overrides("sgd", _SGD_KEYS, "sgd")
    if ov:
        patch["sgd"] = replace(default_sgd_config(base), **ov)
    return replace(base, **patch) if patch else base


def _cmd_experiment(args, experiment: str) -> int:
    spec = build_spec(args, experiment)
    records = run_experiment(spec)
    for r in records:
        coord = " ".join(f"{k}={v}" for k, v in r.coords.items())
        mets = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in sorted(r.metrics.items()))
        print(f"[{r.experiment}] {coord} :: {mets}")
    if experiment == "tradeoff_grid":
        for m, c in tradeoff_correlations(records).items():
            print(f"[correlation] method={m} pearson={c['pearson']:.4f} "
                  f"spearman={c['spearman']:.4f} n={c['n']}")
    if spec.out_dir:
        print(f"results written to {spec.out_dir}")
    return 0


def _cmd_train(args) -> int:
    spec = build_spec(args, "attack_eval")  # carrier for data/model/inference settings
    if not spec.out_dir and not spec.ensemble_dir:
        raise ConfigError("train needs --out or --ensemble-dir to persist the posterior")
    train, test = load_split(spec)
    arch = NetworkArch(
        train.input_dim, spec.hidden_sizes, train.num_classes, default_activation(spec)
    )
    ens = train_posterior(spec, arch, train, spec.method, training_seed(spec))
    out = spec.ensemble_dir or os.path.join(spec.out_dir, "ensemble")
    save_ensemble(ens, out)
    acc = accuracy(ens, test)
    extra = f" acceptance={ens.acceptance_rate:.3f}" if ens.acceptance_rate is not None else ""
    print(f"trained {spec.method} posterior ({len(ens)} samples) on {train.name}: "
          f"test_accuracy={acc:.4f}{extra}")
    print(f"saved to {out}")
    return 0


def _cmd_attack(args) -> int:
    spec = build_spec(args, "attack_eval")
    if not spec.ensemble_dir:
        raise ConfigError("attack needs --ensemble-dir pointing at a saved posterior")
    ens = load_ensemble(spec.ensemble_dir)
    _, test = load_split(spec)
    n_eval = min(spec.n_eval, len(test))
    evalset = Dataset(test.inputs[:n_eval], test.labels[:n_eval], test.num_classes,
                      test.name, test.bounds)
    cfg = attack_config(spec, evalset)
    fn = ATTACKS[args.attack]
    x_adv = fn(ens, evalset.inputs, evalset.labels, cfg, derive_seed(spec.seed, 7))
    from .predictive import predict_labels_batch

    adv_acc = float(np.mean(predict_labels_batch(ens, x_adv) == evalset.labels))
    sd = softmax_difference(ens, evalset.inputs, x_adv)
    clean = accuracy(ens, evalset)
    print(f"attack={args.attack} epsilon={cfg.epsilon} n={n_eval}")
    print(f"clean_accuracy={clean:.4f} adversarial_accuracy={adv_acc:.4f} "
          f"softmax_difference={sd:.4f} robustness={1 - sd:.4f}")
    if spec.out_dir:
        os.makedirs(spec.out_dir, exist_ok=True)
        with open(os.path.join(spec.out_dir, "attack.csv"), "w") as f:
            f.write("attack,epsilon,n,clean_accuracy,adversarial_accuracy,softmax_difference\n")
            f.write(f"{args.attack},{cfg.epsilon!r},{n_eval},{clean!r},{adv_acc!r},{sd!r}\n")
    return 0


def _load_results(out_dir):
    path = os.path.join(out_dir, "results.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no results.csv under {out_dir!r}")
    with open(path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ConfigError(f"{path} is empty")
    return rows


def _cmd_report(args) -> int:
    rows = _load_results(args.out)
    experiment = rows[0]["experiment"]
    if experiment == "grad_scan":
        pts = [
            (float(r["n_use"]), math.log10(float(r["median_abs_component"]) + 1e-300), "median |g|")
            for r in rows
        ]
        svg = emit_svg_scatter(pts, "posterior samples used", "log10 median |gradient component|",
                               "Expected-gradient magnitude vs. sample count")
    elif experiment == "halfmoons_sweep":
        pts = [
            (float(r["hidden"]), math.log10(float(r["median_abs_component"]) + 1e-300),
             f"n_train={r['n_train']}")
            for r in rows
            if float(r["filtered"]) == 0.0
        ]
        svg = emit_svg_scatter(pts, "hidden units", "log10 median |gradient component|",
                               "Gradient magnitude across capacity/data grid")
    elif experiment == "attack_eval":
        pts = []
        for r in rows:
            for i, a in enumerate(("rand", "fgsm", "pgd")):
                pts.append((float(i), float(r[f"adv_accuracy_{a}"]), r["method"]))
        svg = emit_svg_scatter(pts, "attack (0=rand 1=fgsm 2=pgd)", "adversarial accuracy",
                               "Adversarial accuracy by attack")
    elif experiment == "tradeoff_grid":
        pts = [
            (float(r["accuracy"]), float(r["robustness"]), r["method"]) for r in rows
        ]
        svg = emit_svg_scatter(pts, "test accuracy", "robustness (1 - softmax difference)",
                               "Robustness vs. accuracy")
    else:
        raise ConfigError(f"cannot report on experiment type {experiment!r}")
    out_path = os.path.join(args.out, "plot.svg")
    with open(out_path, "w") as f:
        f.write(svg)
    manifest_path = os.path.join(args.out, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            manifest = json.load(f)
        print(f"experiment={experiment} records={manifest.get('n_records')} "
              f"config_hash={manifest.get('config_hash')}")
    print(f"wrote {out_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "attack":
            return _cmd_attack(args)
        return _cmd_experiment(args, _EXP_BY_COMMAND[args.command])
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DiagnosticError as e:
        print(f"diagnostic failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
