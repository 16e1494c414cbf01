# coding: utf-8
"""Feature-learning dynamics of adversarial training and distillation."""

from adsim.model import *
from adsim.training import TrainConfig, TrainResult, train
from adsim.experiments import (
    SweepSpec,
    entropy_criterion_study,
    identify_unlearnable_set,
    run_dichotomy_sweep,
    run_experiment,
)

__version__ = "0.1.0"
