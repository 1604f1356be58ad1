"""Bayesian neural network posteriors under gradient-based adversarial attack.

Library + experiment harness: dense nets with exact input/weight gradients,
HMC and mean-field VI posteriors, an SGD baseline, FGSM / PGD / random-sign
attacks against the ensemble predictive, and reproducible experiment runs.
"""

__version__ = "0.1.0"

from .attacks import ATTACKS, AttackConfig, fgsm, pgd, project_linf, random_sign_attack
from .datasets import Dataset, load_idx, make_half_moons, save_idx, split, subsample
from .errors import (
    ConfigError,
    DiagnosticError,
    IdxFormatError,
    NumericsError,
    ShapeMismatchError,
)
from .inference import (
    HmcConfig,
    PosteriorEnsemble,
    SgdConfig,
    VariationalPosterior,
    ViConfig,
    hmc_sample,
    leapfrog,
    load_ensemble,
    log_posterior,
    save_ensemble,
    sgd_train,
    vi_fit,
    vi_sample,
)
from .metrics import accuracy, adversarial_accuracy, softmax_difference
from .nets import (
    NetworkArch,
    cross_entropy,
    forward,
    grad_input,
    grad_weights,
    init_weights,
    softmax,
)
from .predictive import (
    ExpectedGradient,
    PredictiveResult,
    expected_loss_gradient,
    predict_ensemble,
    predict_label,
)
