# coding: utf-8
"""Track the quantities that govern the training dynamics.

Every filter decomposes as its initialization plus a combination of the
noise patches it was trained on,

    <w_r(t), x_ij> = <w_r(0), x_ij> + sum_{k,q} y_k rho_kqr(t) <x_kq, x_ij>,

with one noise coefficient ``rho`` per (sample, noise patch, filter). The
helpers below maintain those coefficients in lockstep with training, check
the identity, and detect when the signal and the noise first reach their
critical scales.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, NamedTuple, Optional, Sequence

import numpy as np

from adsim.errors import DomainError, ShapeError
from adsim.io import load_arrays, save_arrays
from adsim.model.data import Dataset, SyntheticConfig
from adsim.model.network import StudentWeights
from adsim.typing import FloatArray, RunArtifact
from adsim.utils import first_crossing

logger = logging.getLogger(__name__)


class NoiseCoefficients:
    """The ``(N, P, m)`` noise coefficients of a run.

    Signal-patch slots are stored and stay exactly zero. `signed` is True
    when increments may be negative, as under distillation.
    """

    __slots__ = ["rho", "signed"]

    def __init__(self, rho: FloatArray, signed: bool = False) -> None:
        rho = np.array(rho, dtype=float)
        if rho.ndim != 3:
            raise ShapeError(
                f"Noise coefficients are (N, P, m); got {rho.shape}"
            )
        rho.setflags(write=False)
        self.rho = rho
        self.signed = bool(signed)

    @classmethod
    def zeros(
        cls, N: int, P: int, m: int, signed: bool = False
    ) -> NoiseCoefficients:
        return cls(np.zeros((N, P, m)), signed)

    @property
    def shape(self) -> tuple:
        return self.rho.shape

    def save(self, path: Any) -> None:
        save_arrays(path, rho=self.rho, signed=np.array(self.signed))

    @classmethod
    def load(cls, path: Any) -> NoiseCoefficients:
        arrays = load_arrays(path)
        return cls(arrays["rho"], bool(arrays["signed"]))


class ShiftedCoefficients:
    """Noise coefficients shifted by the initial label-aligned alignment."""

    __slots__ = ["rho_hat"]

    def __init__(self, rho_hat: FloatArray) -> None:
        self.rho_hat = np.asarray(rho_hat, dtype=float)


def _check_shapes(
    coeffs: NoiseCoefficients, weights: StudentWeights, dataset: Dataset
) -> None:
    expected = (dataset.N, dataset.P, weights.m)
    if coeffs.shape != expected:
        raise ShapeError(
            f"Noise coefficients of shape {coeffs.shape} do not match "
            f"(N, P, m) = {expected}"
        )
    if weights.d != dataset.d:
        raise ShapeError(
            f"Weights have d={weights.d} but the dataset has d={dataset.d}"
        )


def update_noise_coefficients(
    coeffs: NoiseCoefficients,
    weights_before: StudentWeights,
    per_sample_factor: Sequence[float],
    dataset: Dataset,
    eta: float,
) -> NoiseCoefficients:
    """Advance the coefficients by one training step.

    Entry ``(i, j, r)`` grows by ``(3 eta / N) * g_i * <w_r, x_ij>^2``,
    with ``w_r`` the weights before the step and ``g_i`` the per-sample
    loss factor used by that step.
    """
    _check_shapes(coeffs, weights_before, dataset)
    factor = np.asarray(per_sample_factor, dtype=float)
    if factor.shape != (dataset.N,):
        raise ShapeError(
            f"Expected {dataset.N} per-sample factors; got {factor.shape}"
        )

    responses = dataset.patches @ weights_before.weights.T
    increment = (3.0 * eta / dataset.N) * factor[:, None, None] * responses**2
    increment[~dataset.noise_mask] = 0.0

    return NoiseCoefficients(coeffs.rho + increment, coeffs.signed)


def _initial_alignment(
    init_weights: StudentWeights, dataset: Dataset
) -> FloatArray:
    """``y_i <w_r(0), x_ij> / ||x_ij||^2`` on noise slots, 0 elsewhere."""
    norms = np.sum(dataset.patches**2, axis=-1)
    responses = dataset.patches @ init_weights.weights.T
    mask = dataset.noise_mask & (norms > 0)
    return np.divide(
        dataset.labels[:, None, None] * responses,
        norms[..., None],
        out=np.zeros_like(responses),
        where=mask[..., None],
    )


def shifted_coefficients(
    coeffs: NoiseCoefficients,
    init_weights: StudentWeights,
    dataset: Dataset,
) -> ShiftedCoefficients:
    _check_shapes(coeffs, init_weights, dataset)
    return ShiftedCoefficients(
        coeffs.rho + _initial_alignment(init_weights, dataset)
    )


def rho_hat_max(shifted: ShiftedCoefficients, dataset: Dataset) -> float:
    """Largest shifted coefficient over the noise slots of S_U.

    Falls back to every noise slot when S_U is empty.
    """
    mask = np.array(dataset.noise_mask)
    if dataset.unlearnable_indices.size:
        mask &= ~dataset.learnable[:, None]
    return float(shifted.rho_hat[mask].max())


def verify_decomposition(
    coeffs: NoiseCoefficients,
    weights_now: StudentWeights,
    weights_init: StudentWeights,
    dataset: Dataset,
    relative: bool = False,
) -> float:
    """Return the largest residual of the inner-product decomposition.

    Parameters
    ----------
    coeffs : NoiseCoefficients
        Coefficients updated in lockstep with the run.
    weights_now, weights_init : StudentWeights
        Current and initial weights.
    dataset : Dataset
        The training set.
    relative : bool
        Divide by the largest current noise response.

    Returns
    -------
    float
        The max over (i, j, r) of the absolute residual.
    """
    _check_shapes(coeffs, weights_now, dataset)
    mask = dataset.noise_mask
    noise = dataset.patches[mask]
    labels = np.broadcast_to(dataset.labels[:, None], mask.shape)[mask]
    rho = coeffs.rho[mask]

    gram = noise @ noise.T
    predicted = noise @ weights_init.weights.T + gram @ (labels[:, None] * rho)
    actual = noise @ weights_now.weights.T

    residual = float(np.abs(actual - predicted).max())
    if relative:
        scale = float(np.abs(actual).max())
        return residual / scale if scale > 0 else residual
    return residual


@dataclass(frozen=True)
class TrainingTrace:
    """Full-resolution per-iteration series, indexed by iteration 0..T."""

    max_signal_weight: FloatArray
    rho_hat_max: FloatArray

    def __post_init__(self) -> None:
        signal = np.asarray(self.max_signal_weight, dtype=float)
        rho_hat = np.asarray(self.rho_hat_max, dtype=float)
        if signal.shape != rho_hat.shape or signal.ndim != 1:
            raise ShapeError(
                "Trace series must be 1-D and of equal length; got "
                f"{signal.shape} and {rho_hat.shape}"
            )
        object.__setattr__(self, "max_signal_weight", signal)
        object.__setattr__(self, "rho_hat_max", rho_hat)

    def __len__(self) -> int:
        return self.max_signal_weight.size


@dataclass(frozen=True)
class HittingTimes(RunArtifact):
    T0: Optional[int]
    T1: Optional[int]
    c0: float
    c1: float
    t0_cutoff: float
    t1_cutoff: float

    @property
    def ordered(self) -> Optional[bool]:
        """Whether T0 < T1, or None unless both were detected."""
        if self.T0 is None or self.T1 is None:
            return None
        return self.T0 < self.T1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T0": self.T0,
            "T1": self.T1,
            "C0": self.c0,
            "C1": self.c1,
            "t0_cutoff": self.t0_cutoff,
            "t1_cutoff": self.t1_cutoff,
        }


def hitting_cutoffs(
    c0: float, c1: float, config: SyntheticConfig, m: int
) -> tuple:
    """Return the signal and shifted-noise thresholds of the hitting times."""
    t0_cutoff = c0 / (config.alpha * m ** (1 / 3))
    t1_cutoff = c1 / ((m * config.P) ** (1 / 3) * config.sigma_n**2 * config.d)
    return t0_cutoff, t1_cutoff


def detect_hitting_times(
    trace: TrainingTrace,
    c0: float,
    c1: float,
    config: SyntheticConfig,
    m: int,
    has_unlearnable: bool = True,
) -> HittingTimes:
    """Find the first iterations at which signal and noise cross over.

    T0 is the first iteration with ``max_r w_r1 > c0 / (alpha m^(1/3))``,
    T1 the first with ``rho_hat_max > c1 / ((m P)^(1/3) sigma_n^2 d)``.
    Without unlearnable samples there is no noise to memorize and T1 is
    None.
    """
    t0_cutoff, t1_cutoff = hitting_cutoffs(c0, c1, config, m)
    return HittingTimes(
        first_crossing(trace.max_signal_weight, t0_cutoff),
        (
            first_crossing(trace.rho_hat_max, t1_cutoff)
            if has_unlearnable
            else None
        ),
        c0,
        c1,
        t0_cutoff,
        t1_cutoff,
    )


class NoiseResponse(NamedTuple):
    value: float
    sample: int
    patch: int
    filter: int


def max_unlearnable_noise_response(
    weights: StudentWeights, dataset: Dataset
) -> NoiseResponse:
    """Locate the largest ``y_i <w_r, x_ij>`` over the noise of S_U.

    The maximizing patch is the vulnerable patch replayed by the
    memorized-patch attack.

    Raises
    ------
    DomainError
        If the dataset has no unlearnable sample.
    """
    if not dataset.unlearnable_indices.size:
        raise DomainError("The unlearnable set is empty")
    if weights.d != dataset.d:
        raise ShapeError(
            f"Weights have d={weights.d} but the dataset has d={dataset.d}"
        )

    aligned = dataset.labels[:, None, None] * (
        dataset.patches @ weights.weights.T
    )
    mask = dataset.noise_mask & ~dataset.learnable[:, None]
    aligned = np.where(mask[..., None], aligned, -np.inf)

    i, j, r = np.unravel_index(np.argmax(aligned), aligned.shape)
    return NoiseResponse(float(aligned[i, j, r]), int(i), int(j), int(r))


def max_noise_response(weights: StudentWeights, dataset: Dataset) -> float:
    """Largest ``|<w_r, x_ij>|`` over every noise patch of `dataset`."""
    responses = dataset.patches[dataset.noise_mask] @ weights.weights.T
    return float(np.abs(responses).max())


def signal_cap(T: int, alpha: float) -> float:
    """Upper scale ``3 log^(1/3)(T) / alpha`` of the signal weights."""
    return 3.0 * math.log(max(T, 1)) ** (1 / 3) / alpha


def theoretical_horizons(
    config: SyntheticConfig,
    m: int,
    sigma_0: float,
    eta: float,
    epsilon: float,
    c0: float = 1.0,
    delta: float = 0.05,
) -> Dict[str, float]:
    """Return the analytic time scales of the dynamics.

    These are orders of magnitude up to logarithmic factors, reported as
    diagnostics next to the detected hitting times.
    """
    alpha, sigma_n, d = config.alpha, config.sigma_n, config.d
    N, P, p_un = config.N, config.P, config.p_un
    if eta <= 0:
        return dict.fromkeys(
            ("t0_lower", "t0_upper", "t1_scale", "good_teacher_horizon"),
            math.inf,
        )

    t0_lower = 1 / (
        12 * math.sqrt(2 * math.log(16 * m / delta)) * eta * alpha**3 * sigma_0
    )
    t0_upper = (
        5 * math.exp(2 * c0**3)
        / (eta * (alpha - epsilon) ** 3 * (1 - p_un) * sigma_0)
        if p_un < 1 and alpha > epsilon
        else math.inf
    )
    return {
        "t0_lower": t0_lower,
        "t0_upper": t0_upper,
        "t1_scale": N / (eta * sigma_0 * sigma_n**3 * d**1.5),
        "good_teacher_horizon": N
        / (eta * m * P * sigma_0**4 * sigma_n**6 * d**3),
    }
