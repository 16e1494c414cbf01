import numpy as np
import pytest

from adsim.model.adversary import AttackConfig
from adsim.model.data import (
    Dataset,
    SyntheticConfig,
    generate_dataset,
    sample_test_learnable,
)
from adsim.model.network import StudentWeights, init_weights
from adsim.training import TrainConfig

DESK = dict(d=30, N=20, P=3, alpha=5.0, sigma_n=0.4)
DESK_M = 8
SIGMA_0 = 0.01


@pytest.fixture
def desk_config():
    return SyntheticConfig(**DESK, p_un=0.1, seed=0)


@pytest.fixture
def desk_dataset(desk_config):
    return generate_dataset(desk_config)


@pytest.fixture
def learnable_dataset():
    return generate_dataset(SyntheticConfig(**DESK, p_un=0.0, seed=0))


@pytest.fixture
def desk_init(desk_config):
    return init_weights(DESK_M, desk_config.d, SIGMA_0, seed=1)


@pytest.fixture
def desk_test_set(desk_config):
    return sample_test_learnable(desk_config, 10, seed=2)


@pytest.fixture
def fast_train():
    return TrainConfig(
        eta=0.01,
        epsilon=0.5,
        T=40,
        log_every=10,
        eval_attack=AttackConfig(0.5, 5),
        test_count=10,
    )


def aligned_weights(d, m=DESK_M, sign=1.0):
    """Filters that only read the learnable feature, with a given sign."""
    weights = np.zeros((m, d))
    weights[:, 0] = sign
    return StudentWeights(weights, SIGMA_0)


def with_zero_noise_patch(dataset, sample, patch):
    """Copy of `dataset` whose given noise patch is all zeros."""
    patches = np.array(dataset.patches)
    patches[sample, patch] = 0.0
    return Dataset(
        patches,
        dataset.labels,
        dataset.signal_index,
        dataset.learnable,
        config=dataset.config,
    )
