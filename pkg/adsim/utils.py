# coding: utf-8
"""Mathematical utilities for adsim."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, log_expit

from adsim.typing import FloatArray, Real


def normL2(array: FloatArray) -> FloatArray:
    """Return the L2 norm along the last axis.

    Parameters
    ----------
    array : numpy.ndarray
        An array whose last axis holds vectors, e.g. a ``(P, d)`` sample or
        an ``(N, P, d)`` stack of samples.

    Returns
    -------
    numpy.ndarray
        The norms, with the last axis removed.
    """
    return np.linalg.norm(array, axis=-1)


def sigmoid(z: Real) -> Real:
    """Logistic sigmoid 1 / (1 + exp(-z))."""
    return expit(z)


def psi(z: Real) -> Real:
    """Negative sigmoid 1 / (1 + exp(z)), the logistic-loss derivative size.

    The derivative of ``logistic_loss`` is exactly ``-psi``.
    """
    return expit(-np.asarray(z, dtype=float))


def logistic_loss(z: Real) -> Real:
    """Logistic loss log(1 + exp(-z)), stable for large |z|."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=float))


def binary_entropy(margin: Real) -> Real:
    """Shannon entropy, in nats, of the Bernoulli law sigmoid(margin).

    Both log-probabilities are computed with ``log_expit`` so the entropy
    stays accurate, and symmetric in the sign of the margin, far into the
    saturated regime.

    Parameters
    ----------
    margin : float or numpy.ndarray
        The teacher margin y * f_T(X).

    Returns
    -------
    float or numpy.ndarray
        -p log p - (1 - p) log(1 - p) with p = sigmoid(margin).
    """
    z = np.abs(np.asarray(margin, dtype=float))
    return -(expit(z) * log_expit(z) + expit(-z) * log_expit(-z))


def first_crossing(values: FloatArray, threshold: float) -> Optional[int]:
    """Return the first index whose value is strictly above `threshold`.

    Returns
    -------
    int or None
        The index, or None if the series never exceeds the threshold.
    """
    hits = np.flatnonzero(np.asarray(values) > threshold)
    return int(hits[0]) if hits.size else None


def derive_seeds(seed: int, count: int) -> Tuple[int, ...]:
    """Derive `count` independent integer seeds from a single seed.

    The same `seed` always yields the same tuple, and different streams
    are statistically independent (``numpy.random.SeedSequence``).
    """
    state = np.random.SeedSequence(seed).generate_state(count, np.uint64)
    return tuple(int(s) for s in state)


def round_half_up(value: float) -> int:
    """Round to the nearest integer, ties going up."""
    return int(np.floor(value + 0.5))
