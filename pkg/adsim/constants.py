# coding: utf-8
"""Define a collection of useful constants."""

from collections import OrderedDict

# Desk-scale reproduction of the synthetic study. Every default in the
# configuration layer is read from here.
DEFAULTS = OrderedDict(
    {
        "d": 100,
        "N": 200,
        "P": 4,
        "alpha": 5.0,
        "sigma_n": 0.4,
        "p_un": 0.0,
        "m": 80,
        "sigma_0": 0.01,
        "eta": 0.05,
        "epsilon": 0.5,
        "T": 4000,
        "gamma": 10.0,
        "pgd_steps": 20,
        "test_count": 100,
        "log_every": 10,
        "c0": 1.0,
        "c1": 1.0,
        "delta": 0.05,
        "criterion_steps": 10,
        "noise_multiple": 3.0,
    }
)

# PGD step size is PGD_STEP_FACTOR * epsilon / steps.
PGD_STEP_FACTOR = 2.5

# Loss or weight magnitudes above this abort a run.
DIVERGENCE_THRESHOLD = 1e12

# Relative tolerance of the inner-product decomposition identity.
DECOMPOSITION_TOLERANCE = 1e-8

# Labels of the concentration-event properties, in report order.
EVENT_E_PROPERTIES = OrderedDict(
    {
        "P1": "noise patch squared norm",
        "P2": "noise patch cross inner product",
        "P3": "noise patch max abs coordinate",
        "P4": "initial filter norm",
        "P5": "initial signal coordinate",
        "P6": "initial filter-noise inner product",
        "P7": "max initial signal coordinate",
        "P8": "max initial label-aligned noise response",
    }
)

# Column order of the per-run metrics CSV.
METRICS_COLUMNS = (
    "iteration",
    "train_loss",
    "robust_train_acc",
    "robust_train_acc_learnable",
    "robust_train_acc_unlearnable",
    "robust_test_acc",
    "clean_test_acc",
    "gen_gap",
    "max_signal_weight",
    "rho_hat_max",
    "max_noise_response",
    "max_unlearnable_noise_response",
    "signal_cap_ok",
    "events",
)

# Column order of sweep.csv.
SWEEP_COLUMNS = (
    "p_un",
    "method",
    "seed",
    "status",
    "final_robust_train_acc",
    "peak_robust_train_acc",
    "final_robust_test_acc",
    "peak_robust_test_acc",
    "peak_iteration",
    "degradation",
    "gen_gap",
    "t0",
    "t1",
)

# Process exit codes of the command-line interface.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_PROPERTY = 4
