import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from adsim.errors import BudgetError, ConfigurationError, ShapeError
from adsim.io import read_csv
from adsim.model.adversary import (
    AttackConfig,
    memorized_patch_attack,
    perturb_signal_patch,
    perturb_signal_patches,
    pgd_attack,
    pgd_attack_batch,
    random_sign_attack,
    write_pgd_trace,
)
from adsim.model.data import Sample
from adsim.model.network import StudentWeights, forward, init_weights

from .conftest import aligned_weights

EPSILON = 0.5
CORNER_WEIGHTS = StudentWeights(np.array([[1.0, -2.0, 0.5, 0.0]]), 1.0)
CORNER_PATCHES = np.array([[[0.5, 0.1, -0.2, 0.4]]])


def _memorized_scale(epsilon, sigma_n, dims, delta):
    d, N, P = dims
    log_term = math.log(16 * d * N * P / delta)
    return epsilon / (sigma_n * math.sqrt(2 * log_term))


def test_step_size_defaults():
    assert AttackConfig(0.5, 20).effective_step_size == pytest.approx(
        2.5 * 0.5 / 20
    )
    assert AttackConfig(0.5, 20, step_size=0.1).effective_step_size == 0.1


@pytest.mark.parametrize(
    "args", [(-0.1, 10), (0.5, 0), (0.5, 10, 0.0)]
)
def test_attack_config_validation(args):
    with pytest.raises(ConfigurationError):
        AttackConfig(*args)


def test_training_attack_shrinks_the_learnable_signal(desk_dataset):
    weights = aligned_weights(desk_dataset.d)
    adversarial = perturb_signal_patches(weights, desk_dataset, EPSILON)
    values = desk_dataset.signal_values(adversarial)

    # positive signal weights: moving toward zero lowers the margin
    assert_allclose(
        values, desk_dataset.labels * (desk_dataset.config.alpha - EPSILON)
    )


def test_training_attack_picks_the_other_endpoint(desk_dataset):
    weights = aligned_weights(desk_dataset.d, sign=-1.0)
    adversarial = perturb_signal_patches(weights, desk_dataset, EPSILON)
    learnable = desk_dataset.learnable

    assert_allclose(
        desk_dataset.signal_values(adversarial)[learnable],
        desk_dataset.labels[learnable]
        * (desk_dataset.config.alpha + EPSILON),
    )


def test_training_attack_ties_on_the_unlearnable_feature(desk_dataset):
    weights = aligned_weights(desk_dataset.d)
    adversarial = perturb_signal_patches(weights, desk_dataset, EPSILON)
    unlearnable = ~desk_dataset.learnable

    assert_allclose(
        desk_dataset.signal_values(adversarial)[unlearnable],
        desk_dataset.labels[unlearnable]
        * (desk_dataset.config.alpha - EPSILON),
    )


def test_training_attack_moves_a_single_entry(desk_dataset, desk_init):
    adversarial = perturb_signal_patches(desk_init, desk_dataset, EPSILON)
    changed = adversarial != desk_dataset.patches

    assert np.all(changed.sum(axis=(1, 2)) <= 1)
    assert np.abs(adversarial - desk_dataset.patches).max() <= EPSILON + 1e-15


def test_training_attack_never_raises_the_margin(desk_dataset, desk_init):
    adversarial = perturb_signal_patches(desk_init, desk_dataset, EPSILON)
    labels = desk_dataset.labels

    assert np.all(
        labels * forward(desk_init, adversarial)
        <= labels * forward(desk_init, desk_dataset) + 1e-15
    )


def test_training_attack_on_one_sample(desk_dataset, desk_init):
    batch = perturb_signal_patches(desk_init, desk_dataset, EPSILON)
    single = perturb_signal_patch(desk_init, desk_dataset[3], EPSILON)

    assert_array_equal(single.patches, batch[3])


def test_training_attack_validation(desk_dataset, desk_init):
    with pytest.raises(ConfigurationError):
        perturb_signal_patches(desk_init, desk_dataset, -1.0)
    with pytest.raises(ShapeError):
        perturb_signal_patches(
            aligned_weights(desk_dataset.d + 1), desk_dataset, EPSILON
        )


def test_pgd_reaches_the_box_corner():
    result = pgd_attack_batch(
        CORNER_WEIGHTS, CORNER_PATCHES, [1], AttackConfig(0.1, 10)
    )
    margin = forward(CORNER_WEIGHTS, result.patches)[0]

    assert margin == pytest.approx((0.2 - 0.35) ** 3, abs=1e-6)


def test_pgd_without_budget_is_the_identity(desk_dataset, desk_init):
    result = pgd_attack_batch(
        desk_init,
        desk_dataset.patches,
        desk_dataset.labels,
        AttackConfig(0.0, 5),
    )

    assert_array_equal(result.patches, desk_dataset.patches)


def test_pgd_stays_in_the_box(desk_dataset, desk_init):
    attack = AttackConfig(EPSILON, 7)
    result = pgd_attack_batch(
        desk_init, desk_dataset.patches, desk_dataset.labels, attack
    )

    assert np.abs(result.patches - desk_dataset.patches).max() <= (
        EPSILON + 1e-12
    )


def test_pgd_never_raises_the_margin(desk_dataset, desk_init):
    labels = desk_dataset.labels
    result = pgd_attack_batch(
        desk_init, desk_dataset.patches, labels, AttackConfig(EPSILON, 5)
    )

    assert np.all(
        labels * forward(desk_init, result.patches)
        <= labels * forward(desk_init, desk_dataset) + 1e-15
    )


def test_pgd_trace_is_monotone(desk_dataset, desk_init):
    result = pgd_attack_batch(
        desk_init,
        desk_dataset.patches,
        desk_dataset.labels,
        AttackConfig(EPSILON, 6),
        trace=True,
    )

    assert result.trace.shape == (7, desk_dataset.N)
    assert np.all(np.diff(result.trace, axis=0) >= 0)


def test_pgd_without_trace(desk_dataset, desk_init):
    result = pgd_attack_batch(
        desk_init,
        desk_dataset.patches,
        desk_dataset.labels,
        AttackConfig(EPSILON, 2),
    )

    assert result.trace is None


def test_pgd_single_sample_matches_batch(desk_dataset, desk_init):
    attack = AttackConfig(EPSILON, 4)
    batch = pgd_attack_batch(
        desk_init, desk_dataset.patches, desk_dataset.labels, attack
    )
    single = pgd_attack(desk_init, desk_dataset[5], attack)

    assert_allclose(single.patches, batch.patches[5], rtol=0, atol=1e-15)
    assert single.label == desk_dataset[5].label


def test_pgd_shape_check(desk_dataset, desk_init):
    with pytest.raises(ShapeError):
        pgd_attack_batch(
            desk_init, desk_dataset.patches, [1, -1], AttackConfig()
        )


def test_pgd_trace_csv(tmp_path):
    trace = np.arange(6.0).reshape(3, 2)
    path = tmp_path / "trace.csv"
    write_pgd_trace(trace, path)
    rows = read_csv(path)

    assert len(rows) == 6
    assert rows[-1] == {"step": "2", "sample": "1", "loss": "5.0"}


def test_memorized_patch_attack(desk_dataset, desk_init, desk_test_set):
    config = desk_dataset.config
    dims = (config.d, config.N, config.P)
    x_vuln = np.full(config.d, 0.05)
    sample = desk_test_set[0]
    attacked = memorized_patch_attack(
        desk_init, x_vuln, -1, sample, EPSILON, 0.05, dims, config.sigma_n
    )
    shift = sample.label * _memorized_scale(
        EPSILON, config.sigma_n, dims, 0.05
    ) * x_vuln

    assert_array_equal(attacked.signal_patch, sample.signal_patch)
    assert_allclose(
        attacked.patches[sample.noise_mask],
        sample.patches[sample.noise_mask] + shift,
    )


def test_memorized_patch_attack_budget(desk_dataset, desk_init, desk_test_set):
    config = desk_dataset.config
    dims = (config.d, config.N, config.P)
    x_vuln = np.zeros(config.d)
    x_vuln[1] = 2.0 / _memorized_scale(EPSILON, config.sigma_n, dims, 0.05)

    with pytest.raises(BudgetError) as error:
        memorized_patch_attack(
            desk_init,
            x_vuln,
            1,
            desk_test_set[0],
            EPSILON,
            0.05,
            dims,
            config.sigma_n,
        )

    assert error.value.measured_linf == pytest.approx(x_vuln[1])


def test_memorized_patch_attack_without_budget(desk_init, desk_test_set):
    sample = desk_test_set[0]
    attacked = memorized_patch_attack(
        desk_init, np.ones(sample.d), 1, sample, 0.0, 0.05, (30, 20, 3), 0.4
    )

    assert attacked is sample


def test_memorized_patch_attack_shape(desk_init, desk_test_set):
    with pytest.raises(ShapeError):
        memorized_patch_attack(
            desk_init,
            np.ones(3),
            1,
            desk_test_set[0],
            0.5,
            0.05,
            (30, 20, 3),
            0.4,
        )


def test_random_sign_attack(desk_test_set):
    sample = desk_test_set[1]
    attacked = random_sign_attack(sample, EPSILON, seed=0)
    change = attacked.patches - sample.patches

    assert_array_equal(change[sample.signal_index], 0.0)
    assert_allclose(np.abs(change[sample.noise_mask]), EPSILON)
    assert_array_equal(
        random_sign_attack(sample, EPSILON, seed=0).patches, attacked.patches
    )


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_training_attack_beats_a_grid_search(desk_dataset, seed):
    weights = init_weights(8, desk_dataset.d, 0.3, seed)
    labels = desk_dataset.labels
    rows = np.arange(desk_dataset.N)
    directions = desk_dataset.signal_directions
    values = desk_dataset.signal_values()

    adversarial = perturb_signal_patches(weights, desk_dataset, EPSILON)
    chosen = labels * forward(weights, adversarial)

    grid = []
    for t in np.linspace(-EPSILON, EPSILON, 101):
        patches = np.array(desk_dataset.patches)
        patches[rows, desk_dataset.signal_index, directions] = values + t
        grid.append(labels * forward(weights, patches))
    lowest = np.min(grid, axis=0)

    # the smallest margin is the largest logistic loss
    assert np.all(chosen <= lowest + 1e-9 * (1 + np.abs(lowest)))


def test_memorized_patch_beats_random_signs():
    d, P, label = 30, 3, 1
    x_vuln = np.zeros(d)
    x_vuln[1:-1] = 0.4 * np.resize([1.0, -1.0, -1.0], d - 2)
    filters = np.tile(x_vuln / np.linalg.norm(x_vuln), (8, 1))
    weights = StudentWeights(filters, 0.01)

    patches = np.zeros((P, d))
    patches[0, 0] = 5.0 * label
    sample = Sample(patches, label, 0, True)

    memorized = memorized_patch_attack(
        weights, x_vuln, 1, sample, EPSILON, 0.05, (d, 20, P), 0.4
    )
    random = [
        random_sign_attack(sample, EPSILON, seed) for seed in range(1000)
    ]

    memorized_margin = label * forward(weights, memorized)
    random_margin = np.mean([label * forward(weights, s) for s in random])
    assert memorized_margin < 0.0
    assert memorized_margin < random_margin - 1.0
    assert np.abs(memorized.patches - sample.patches).max() <= EPSILON
