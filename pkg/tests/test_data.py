import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from adsim.errors import ConfigurationError, DomainError, ShapeError
from adsim.model.data import (
    Dataset,
    Sample,
    SyntheticConfig,
    generate_dataset,
    randomize_labels,
    sample_test_learnable,
)


def test_default_config_sizes():
    dataset = generate_dataset(SyntheticConfig(p_un=0.1))

    assert dataset.patches.shape == (200, 4, 100)
    assert dataset.unlearnable_indices.size == 20
    assert dataset.learnable_indices.size == 180


def test_noise_patches_vanish_on_both_features(desk_dataset):
    noise = desk_dataset.patches[desk_dataset.noise_mask]

    assert np.all(noise[:, 0] == 0.0)
    assert np.all(noise[:, -1] == 0.0)


def test_signal_patch_layout(desk_dataset):
    alpha = desk_dataset.config.alpha
    d = desk_dataset.d
    for sample in desk_dataset:
        expected = np.zeros(d)
        expected[sample.signal_direction] = alpha * sample.label
        assert_array_equal(sample.signal_patch, expected)
        assert sample.signal_direction == (0 if sample.learnable else d - 1)


def test_learnable_only_regime(learnable_dataset):
    assert learnable_dataset.unlearnable_indices.size == 0
    assert np.all(learnable_dataset.signal_directions == 0)


def test_all_unlearnable():
    config = SyntheticConfig(d=10, N=12, P=2, p_un=1.0)
    dataset = generate_dataset(config)

    assert dataset.learnable_indices.size == 0


def test_unlearnable_count_rounds_half_up():
    assert SyntheticConfig(N=10, p_un=0.05).n_unlearnable == 1
    assert SyntheticConfig(N=10, p_un=0.04).n_unlearnable == 0
    assert SyntheticConfig(N=200, p_un=0.1).n_unlearnable == 20


def test_generation_is_deterministic(desk_config):
    first = generate_dataset(desk_config)
    second = generate_dataset(desk_config)

    assert_array_equal(first.patches, second.patches)
    assert_array_equal(first.labels, second.labels)
    assert first.fingerprint() == second.fingerprint()


def test_seed_changes_the_dataset(desk_config):
    other = generate_dataset(desk_config.replace(seed=1))

    assert other.fingerprint() != generate_dataset(desk_config).fingerprint()


def test_dataset_is_read_only(desk_dataset):
    with pytest.raises(ValueError):
        desk_dataset.patches[0, 0, 0] = 1.0


def test_noise_norm_matches_chi_square_mean():
    config = SyntheticConfig(d=100, N=2500, P=5, sigma_n=0.4)
    dataset = generate_dataset(config)
    noise = dataset.patches[dataset.noise_mask]
    expected = config.sigma_n**2 * (config.d - 2)

    assert noise.shape[0] == 10000
    assert np.mean(np.sum(noise**2, axis=1)) == pytest.approx(
        expected, rel=0.02
    )


def test_test_samples_are_learnable(desk_config):
    samples = sample_test_learnable(desk_config, 100, seed=3)

    assert len(samples) == 100
    assert all(s.learnable for s in samples)


def test_test_samples_without_noise():
    config = SyntheticConfig(d=10, P=3, sigma_n=1e-300)
    (sample,) = sample_test_learnable(config, 1, seed=0)
    noise = sample.patches[sample.noise_mask]

    assert np.all(np.abs(noise) < 1e-250)
    assert sample.signal_patch[0] == config.alpha * sample.label


def test_test_label_balance():
    config = SyntheticConfig(d=3, P=2)
    samples = sample_test_learnable(config, 10000, seed=5)
    positive = np.mean([s.label > 0 for s in samples])

    # three standard deviations of a fair binomial proportion
    assert abs(positive - 0.5) <= 3 * np.sqrt(0.25 / 10000)


def test_test_set_count_must_be_positive(desk_config):
    with pytest.raises(ConfigurationError):
        sample_test_learnable(desk_config, 0, seed=0)


@pytest.mark.parametrize(
    "changes",
    [
        {"d": 2},
        {"N": 0},
        {"P": 1},
        {"alpha": 0.0},
        {"sigma_n": -1.0},
        {"p_un": 1.5},
        {"random_labels": "all"},
    ],
)
def test_invalid_config(changes):
    with pytest.raises(ConfigurationError):
        SyntheticConfig(**changes)


def test_randomize_unlearnable_labels(desk_dataset):
    shuffled = randomize_labels(desk_dataset, "unlearnable", seed=4)
    chosen = desk_dataset.unlearnable_indices
    rest = desk_dataset.learnable_indices

    assert_array_equal(shuffled.patches, desk_dataset.patches)
    assert_array_equal(shuffled.labels[rest], desk_dataset.labels[rest])
    assert sorted(shuffled.labels[chosen]) == sorted(
        desk_dataset.labels[chosen]
    )


def test_randomize_learnable_labels_keeps_the_label_multiset(desk_dataset):
    shuffled = randomize_labels(desk_dataset, "learnable", seed=4)
    unlearnable = desk_dataset.unlearnable_indices

    assert_array_equal(
        shuffled.labels[unlearnable], desk_dataset.labels[unlearnable]
    )
    assert sorted(shuffled.labels) == sorted(desk_dataset.labels)


def test_random_labels_through_the_config(desk_config):
    plain = generate_dataset(desk_config)
    shuffled = generate_dataset(
        desk_config.replace(random_labels="unlearnable")
    )

    assert_array_equal(plain.patches, shuffled.patches)


def test_subset_keeps_order(desk_dataset):
    subset = desk_dataset.subset([3, 1])

    assert subset.N == 2
    assert_array_equal(subset.patches[0], desk_dataset.patches[3])
    assert subset.config is desk_dataset.config


def test_dataset_shape_checks():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((2, 3)), [1, 1], [0, 0], [True, True])
    with pytest.raises(ShapeError):
        Dataset(np.zeros((2, 3, 4)), [1], [0, 0], [True, True])
    with pytest.raises(DomainError):
        Dataset.from_samples([])


def test_sample_validation():
    with pytest.raises(ConfigurationError):
        Sample(np.zeros((2, 3)), 0, 0, True)
    with pytest.raises(ShapeError):
        Sample(np.zeros((2, 3)), 1, 2, True)


@settings(max_examples=30, deadline=None)
@given(
    d=st.integers(3, 12),
    N=st.integers(1, 15),
    P=st.integers(2, 5),
    p_un=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_generated_datasets_respect_the_data_model(d, N, P, p_un, seed):
    config = SyntheticConfig(d=d, N=N, P=P, p_un=p_un, seed=seed)
    dataset = generate_dataset(config)
    noise = dataset.patches[dataset.noise_mask]

    assert dataset.unlearnable_indices.size == config.n_unlearnable
    assert set(np.unique(dataset.labels)) <= {-1, 1}
    assert np.all(noise[:, 0] == 0.0) and np.all(noise[:, -1] == 0.0)
    assert_array_equal(
        dataset.labels * dataset.signal_values(),
        np.full(N, config.alpha),
    )
