# coding: utf-8
"""Data model, student network, teachers and adversaries."""

from adsim.model.data import (
    Dataset,
    Sample,
    SyntheticConfig,
    generate_dataset,
    randomize_labels,
    sample_test_learnable,
)
from adsim.model.network import (
    ModelConfig,
    StudentWeights,
    forward,
    init_weights,
    input_gradient,
    logit_gradient,
    project_orthogonal_to_v,
)
from adsim.model.events import check_event_E, check_regime_conditions
from adsim.model.teacher import (
    TeacherKind,
    TeacherSpec,
    soft_label,
    teacher_entropy,
    teacher_margin,
)
from adsim.model.adversary import (
    AttackConfig,
    memorized_patch_attack,
    perturb_signal_patch,
    pgd_attack,
    pgd_attack_batch,
    random_sign_attack,
)
