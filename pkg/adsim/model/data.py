# coding: utf-8
"""Provide the synthetic patch data model.

Every sample is a ``(P, d)`` matrix. One patch, the signal patch, carries
``alpha * y`` along a robust feature: ``e_1`` for learnable samples, which
the student can represent, and ``e_d`` for unlearnable samples, which it
cannot. All other patches are Gaussian noise living on the ``d - 2``
coordinates orthogonal to both features.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np

from adsim.errors import ConfigurationError, DomainError, ShapeError
from adsim.typing import BoolArray, FloatArray, IntArray
from adsim.utils import derive_seeds, round_half_up

logger = logging.getLogger(__name__)

RANDOM_LABEL_MODES = ("none", "unlearnable", "learnable")


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the data generating process."""

    d: int = 100
    N: int = 200
    P: int = 4
    alpha: float = 5.0
    sigma_n: float = 0.4
    p_un: float = 0.0
    seed: int = 0
    random_labels: str = "none"

    def __post_init__(self) -> None:
        if self.d < 3:
            raise ConfigurationError(
                f"d must be at least 3 (got {self.d}): coordinates 1 and d "
                "hold the features and at least one noise direction is needed"
            )
        if self.N < 1:
            raise ConfigurationError(f"N must be positive (got {self.N})")
        if self.P < 2:
            raise ConfigurationError(f"P must be at least 2 (got {self.P})")
        if not self.alpha > 0:
            raise ConfigurationError(
                f"alpha must be positive (got {self.alpha})"
            )
        if not self.sigma_n > 0:
            raise ConfigurationError(
                f"sigma_n must be positive (got {self.sigma_n})"
            )
        if not 0.0 <= self.p_un <= 1.0:
            raise ConfigurationError(
                f"p_un must lie in [0, 1] (got {self.p_un})"
            )
        if self.random_labels not in RANDOM_LABEL_MODES:
            raise ConfigurationError(
                f"random_labels must be one of {RANDOM_LABEL_MODES} "
                f"(got {self.random_labels!r})"
            )

    @property
    def n_unlearnable(self) -> int:
        """Size of the unlearnable set, round(p_un * N) with ties up."""
        return round_half_up(self.p_un * self.N)

    def replace(self, **changes: Any) -> SyntheticConfig:
        """Return a copy with some fields changed."""
        return SyntheticConfig(**{**asdict(self), **changes})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class Sample:
    """A single labelled patch matrix."""

    __slots__ = ["patches", "label", "signal_index", "learnable"]

    def __init__(
        self,
        patches: FloatArray,
        label: int,
        signal_index: int,
        learnable: bool,
    ) -> None:
        patches = np.array(patches, dtype=float)
        if patches.ndim != 2:
            raise ShapeError(
                f"A sample is a (P, d) matrix; got shape {patches.shape}"
            )
        if label not in (1, -1):
            raise ConfigurationError(f"Labels are +1 or -1 (got {label})")
        if not 0 <= signal_index < patches.shape[0]:
            raise ShapeError(
                f"Signal index {signal_index} outside [0, {patches.shape[0]})"
            )

        patches.setflags(write=False)
        self.patches = patches
        self.label = int(label)
        self.signal_index = int(signal_index)
        self.learnable = bool(learnable)

    @property
    def P(self) -> int:
        return self.patches.shape[0]

    @property
    def d(self) -> int:
        return self.patches.shape[1]

    @property
    def signal_direction(self) -> int:
        """Coordinate of the robust feature: 0 (u = e_1) or d - 1 (v)."""
        return 0 if self.learnable else self.d - 1

    @property
    def signal_patch(self) -> FloatArray:
        return self.patches[self.signal_index]

    @property
    def noise_mask(self) -> BoolArray:
        """Boolean mask of the non-signal patches."""
        return np.arange(self.P) != self.signal_index

    def with_patches(self, patches: FloatArray) -> Sample:
        """Return a copy of the sample carrying new patch values."""
        return Sample(patches, self.label, self.signal_index, self.learnable)

    def __repr__(self) -> str:
        kind = "learnable" if self.learnable else "unlearnable"
        return (
            f"Sample(P={self.P}, d={self.d}, y={self.label:+d}, "
            f"s={self.signal_index}, {kind})"
        )


class Dataset:
    """A stack of samples with the learnable/unlearnable partition.

    The patch values are stored as one read-only ``(N, P, d)`` array so
    the training loop can work on all samples at once; indexing returns
    `Sample` views of single rows.
    """

    __slots__ = ["config", "patches", "labels", "signal_index", "learnable"]

    def __init__(
        self,
        patches: FloatArray,
        labels: IntArray,
        signal_index: IntArray,
        learnable: BoolArray,
        config: Optional[SyntheticConfig] = None,
    ) -> None:
        patches = np.array(patches, dtype=float)
        labels = np.array(labels, dtype=np.int64)
        signal_index = np.array(signal_index, dtype=np.int64)
        learnable = np.array(learnable, dtype=bool)

        if patches.ndim != 3:
            raise ShapeError(
                f"Dataset patches must be (N, P, d); got {patches.shape}"
            )
        N, P, _ = patches.shape
        for name, array in (
            ("labels", labels),
            ("signal_index", signal_index),
            ("learnable", learnable),
        ):
            if array.shape != (N,):
                raise ShapeError(
                    f"{name} must have shape ({N},); got {array.shape}"
                )
        if not np.all(np.abs(labels) == 1):
            raise ConfigurationError("Labels are +1 or -1")
        if np.any((signal_index < 0) | (signal_index >= P)):
            raise ShapeError(f"Signal indices must lie in [0, {P})")

        for array in (patches, labels, signal_index, learnable):
            array.setflags(write=False)

        self.config = config
        self.patches = patches
        self.labels = labels
        self.signal_index = signal_index
        self.learnable = learnable

    @staticmethod
    def from_samples(
        samples: Sequence[Sample], config: Optional[SyntheticConfig] = None
    ) -> Dataset:
        """Create a dataset by stacking a list of samples."""
        if not samples:
            raise DomainError("Cannot build a dataset from zero samples")
        return Dataset(
            np.stack([s.patches for s in samples]),
            np.array([s.label for s in samples]),
            np.array([s.signal_index for s in samples]),
            np.array([s.learnable for s in samples]),
            config=config,
        )

    @property
    def N(self) -> int:
        return self.patches.shape[0]

    @property
    def P(self) -> int:
        return self.patches.shape[1]

    @property
    def d(self) -> int:
        return self.patches.shape[2]

    @property
    def learnable_indices(self) -> IntArray:
        """Index set S_L."""
        return np.flatnonzero(self.learnable)

    @property
    def unlearnable_indices(self) -> IntArray:
        """Index set S_U."""
        return np.flatnonzero(~self.learnable)

    @property
    def signal_directions(self) -> IntArray:
        """Per-sample feature coordinate (0 or d - 1)."""
        return np.where(self.learnable, 0, self.d - 1)

    @property
    def noise_mask(self) -> BoolArray:
        """``(N, P)`` mask of the non-signal patches."""
        return np.arange(self.P)[None, :] != self.signal_index[:, None]

    @property
    def samples(self) -> List[Sample]:
        return [self[i] for i in range(self.N)]

    def signal_values(
        self, patches: Optional[FloatArray] = None
    ) -> FloatArray:
        """Signed signal-patch value along each sample's feature direction.

        Parameters
        ----------
        patches : numpy.ndarray, optional
            An ``(N, P, d)`` array sharing this dataset's layout, e.g. the
            adversarial examples. Defaults to the clean patches.
        """
        patches = self.patches if patches is None else patches
        rows = np.arange(self.N)
        return patches[rows, self.signal_index, self.signal_directions]

    def subset(self, indices: Sequence[int]) -> Dataset:
        """Return the dataset restricted to `indices` (in the given order)."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.patches[indices],
            self.labels[indices],
            self.signal_index[indices],
            self.learnable[indices],
            config=self.config,
        )

    def fingerprint(self) -> str:
        """SHA-256 digest of every array, used to match run directories."""
        digest = hashlib.sha256()
        for array in (
            self.patches,
            self.labels,
            self.signal_index,
            self.learnable,
        ):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, index: int) -> Sample:
        return Sample(
            self.patches[index],
            int(self.labels[index]),
            int(self.signal_index[index]),
            bool(self.learnable[index]),
        )

    def __iter__(self) -> Iterator[Sample]:
        for i in range(self.N):
            yield self[i]

    def __repr__(self) -> str:
        return (
            f"Dataset(N={self.N}, P={self.P}, d={self.d}, "
            f"|S_L|={self.learnable.sum()}, |S_U|={(~self.learnable).sum()})"
        )


def _draw(
    config: SyntheticConfig, count: int, n_unlearnable: int, seed: int
) -> Dataset:
    """Draw `count` samples of which `n_unlearnable` are unlearnable."""
    rng = np.random.default_rng(seed)
    d, P = config.d, config.P

    labels = 2 * rng.integers(0, 2, size=count) - 1
    signal_index = rng.integers(0, P, size=count)

    # The first n_unlearnable indices of a seeded shuffle are unlearnable.
    order = rng.permutation(count)
    learnable = np.ones(count, dtype=bool)
    learnable[order[:n_unlearnable]] = False

    # Noise lives on the d - 2 coordinates orthogonal to span{e_1, e_d}.
    patches = rng.normal(0.0, config.sigma_n, size=(count, P, d))
    patches[..., 0] = 0.0
    patches[..., d - 1] = 0.0

    rows = np.arange(count)
    direction = np.where(learnable, 0, d - 1)
    patches[rows, signal_index, :] = 0.0
    patches[rows, signal_index, direction] = config.alpha * labels

    return Dataset(patches, labels, signal_index, learnable, config=config)


def generate_dataset(config: SyntheticConfig) -> Dataset:
    """Generate the training set described by `config`.

    Parameters
    ----------
    config : SyntheticConfig
        The data parameters. The same config always yields a bit-identical
        dataset.

    Returns
    -------
    Dataset
        ``N`` samples of which ``round(p_un * N)`` are unlearnable. When
        ``config.random_labels`` is not ``"none"`` the labels of the chosen
        subset are shuffled afterwards.
    """
    data_seed, label_seed = derive_seeds(config.seed, 2)
    dataset = _draw(config, config.N, config.n_unlearnable, data_seed)

    logger.debug("Generated %r with seed %d", dataset, config.seed)

    if config.random_labels != "none":
        dataset = randomize_labels(dataset, config.random_labels, label_seed)

    return dataset


def sample_test_learnable(
    config: SyntheticConfig, count: int, seed: int
) -> List[Sample]:
    """Draw `count` fresh learnable samples from the test distribution.

    The test distribution shares ``alpha``, ``sigma_n``, ``d`` and ``P``
    with training; its noise is drawn from its own seed, hence independent
    of the training set.
    """
    if count < 1:
        raise ConfigurationError(f"count must be positive (got {count})")
    return _draw(config, count, 0, seed).samples


def randomize_labels(dataset: Dataset, subset: str, seed: int) -> Dataset:
    """Shuffle the labels of a subset of samples, leaving patches intact.

    Parameters
    ----------
    dataset : Dataset
        The source dataset.
    subset : str
        ``"unlearnable"`` shuffles the labels of S_U; ``"learnable"``
        shuffles the labels of a random subset of S_L of size ``|S_U|``.
    seed : int
        Seed of the shuffle.

    Returns
    -------
    Dataset
        A new dataset whose chosen labels no longer match the signal patch.
    """
    if subset not in RANDOM_LABEL_MODES[1:]:
        raise ConfigurationError(
            f"subset must be 'unlearnable' or 'learnable' (got {subset!r})"
        )

    rng = np.random.default_rng(seed)
    unlearnable = dataset.unlearnable_indices
    if subset == "unlearnable":
        chosen = unlearnable
    else:
        chosen = rng.choice(
            dataset.learnable_indices, size=unlearnable.size, replace=False
        )

    if chosen.size == 0:
        logger.warning("Random label test selected no samples; S_U is empty")

    labels = np.array(dataset.labels)
    labels[chosen] = rng.permutation(labels[chosen])

    return Dataset(
        dataset.patches,
        labels,
        dataset.signal_index,
        dataset.learnable,
        config=dataset.config,
    )
