# coding: utf-8
"""Provide the two-layer cubic-activation student network.

The student computes

    f_W(X) = sum_r sum_p [phi(<w_r, x_p>) - phi(-<w_r, x_p>)],

with phi(z) = max(0, z)^3. Since phi(z) - phi(-z) = z^3 exactly, every
routine below works with the cube directly. All routines accept a single
``(P, d)`` sample or a stacked ``(n, P, d)`` array.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Union

import numpy as np

from adsim.errors import ConfigurationError, ShapeError
from adsim.model.data import Dataset, Sample
from adsim.typing import FloatArray

logger = logging.getLogger(__name__)

PatchInput = Union[Sample, Dataset, FloatArray]


@dataclass(frozen=True)
class ModelConfig:
    """Width and initialization of the student."""

    m: int = 80
    sigma_0: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigurationError(f"m must be positive (got {self.m})")
        if not self.sigma_0 > 0:
            raise ConfigurationError(
                f"sigma_0 must be positive (got {self.sigma_0})"
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class StudentWeights:
    """An immutable ``(m, d)`` filter matrix.

    Row ``r`` is the filter ``w_r``. Every instance produced by this module
    has its last column, the component along ``v = e_d``, equal to zero.
    """

    __slots__ = ["weights", "sigma_0"]

    def __init__(self, weights: FloatArray, sigma_0: float) -> None:
        weights = np.array(weights, dtype=float)
        if weights.ndim != 2:
            raise ShapeError(
                f"Weights must be an (m, d) matrix; got {weights.shape}"
            )
        if not np.all(np.isfinite(weights)):
            raise ConfigurationError("Weights must be finite")

        weights.setflags(write=False)
        self.weights = weights
        self.sigma_0 = float(sigma_0)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def signal_weights(self) -> FloatArray:
        """The components ``w_{r,1}`` along the learnable feature."""
        return self.weights[:, 0]

    @property
    def is_orthogonal(self) -> bool:
        """Whether every filter is orthogonal to ``v = e_d``."""
        return bool(np.all(self.weights[:, -1] == 0.0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StudentWeights):
            return NotImplemented
        return self.sigma_0 == other.sigma_0 and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None  # type: ignore

    def __repr__(self) -> str:
        return (
            f"StudentWeights(m={self.m}, d={self.d}, sigma_0={self.sigma_0})"
        )


class LogitGradient:
    """Gradient of the logit with respect to every filter."""

    __slots__ = ["gradient"]

    def __init__(self, gradient: FloatArray) -> None:
        self.gradient = np.asarray(gradient, dtype=float)

    @property
    def shape(self) -> tuple:
        return self.gradient.shape


def _patches(x: PatchInput, d: int) -> FloatArray:
    """Extract the patch array of `x` and check its last dimension."""
    patches = x.patches if isinstance(x, (Sample, Dataset)) else x
    patches = np.asarray(patches, dtype=float)
    if patches.ndim < 2 or patches.shape[-1] != d:
        raise ShapeError(
            f"Patches of shape {patches.shape} do not match d={d}"
        )
    return patches


def _responses(weights: StudentWeights, patches: FloatArray) -> FloatArray:
    """Inner products <w_r, x_p>, shaped ``(..., P, m)``."""
    return patches @ weights.weights.T


def init_weights(m: int, d: int, sigma_0: float, seed: int) -> StudentWeights:
    """Draw the initial filters.

    Parameters
    ----------
    m : int
        Number of filters.
    d : int
        Patch dimension.
    sigma_0 : float
        Standard deviation of each entry.
    seed : int
        Seed of the draw. The standard normals depend only on the seed, so
        scaling `sigma_0` scales every entry by the same factor.

    Returns
    -------
    StudentWeights
        Entries i.i.d. N(0, sigma_0^2), except the last column which is 0.
    """
    if m < 1:
        raise ConfigurationError(f"m must be positive (got {m})")
    if d < 3:
        raise ConfigurationError(f"d must be at least 3 (got {d})")
    if not sigma_0 > 0:
        raise ConfigurationError(f"sigma_0 must be positive (got {sigma_0})")

    rng = np.random.default_rng(seed)
    weights = sigma_0 * rng.standard_normal((m, d))
    weights[:, -1] = 0.0

    return StudentWeights(weights, sigma_0)


def forward(
    weights: StudentWeights, x: PatchInput
) -> Union[float, FloatArray]:
    """Evaluate the student logit.

    Returns a float for a single sample and an ``(n,)`` array for a stack.
    """
    patches = _patches(x, weights.d)
    logits = np.sum(_responses(weights, patches) ** 3, axis=(-2, -1))
    return float(logits) if patches.ndim == 2 else logits


def logit_gradient(weights: StudentWeights, x: PatchInput) -> LogitGradient:
    """Gradient of the logit of one sample with respect to the filters.

    Row ``r`` is ``sum_p 3 <w_r, x_p>^2 x_p``. The last column is not
    projected here; the training loop projects after each update.
    """
    patches = _patches(x, weights.d)
    if patches.ndim != 2:
        raise ShapeError("logit_gradient expects a single (P, d) sample")
    squared = _responses(weights, patches) ** 2
    return LogitGradient(3.0 * squared.T @ patches)


def weighted_logit_gradient(
    weights: StudentWeights, patches: FloatArray, coefficients: FloatArray
) -> FloatArray:
    """Return ``sum_n coefficients[n] * grad f(X_n)`` as an ``(m, d)`` array.

    The reduction runs in a fixed order, so identical inputs give
    bit-identical outputs.
    """
    patches = _patches(patches, weights.d)
    coefficients = np.asarray(coefficients, dtype=float)
    if patches.ndim != 3 or coefficients.shape != (patches.shape[0],):
        raise ShapeError(
            f"Expected (n, P, d) patches with (n,) coefficients; got "
            f"{patches.shape} and {coefficients.shape}"
        )
    squared = _responses(weights, patches) ** 2
    return 3.0 * np.einsum("n,npm,npd->md", coefficients, squared, patches)


def input_gradient(weights: StudentWeights, x: PatchInput) -> FloatArray:
    """Gradient of the logit with respect to the patches, same shape as `x`."""
    patches = _patches(x, weights.d)
    squared = _responses(weights, patches) ** 2
    return 3.0 * squared @ weights.weights


def project_orthogonal_to_v(weights: StudentWeights) -> StudentWeights:
    """Zero the component of every filter along ``v = e_d``."""
    projected = np.array(weights.weights)
    projected[:, -1] = 0.0
    return StudentWeights(projected, weights.sigma_0)
