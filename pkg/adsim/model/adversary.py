# coding: utf-8
"""Provide the adversaries.

Three attacks are available:

* the training attack, restricted to the signal patch, which moves the
  robust feature by ``t = +-epsilon`` and keeps the endpoint of larger
  loss;
* the evaluation attack, an l-infinity PGD over every coordinate of every
  patch, which defines robust accuracy;
* the memorized-patch attack, which replays a memorized unlearnable noise
  patch on the noise patches of a test sample.
"""

from __future__ import annotations

import logging
import math
import pathlib
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from adsim.constants import PGD_STEP_FACTOR
from adsim.errors import BudgetError, ConfigurationError, ShapeError
from adsim.io import write_csv
from adsim.model.data import Dataset, Sample
from adsim.model.network import StudentWeights, forward, input_gradient
from adsim.typing import FloatArray, IntArray
from adsim.utils import logistic_loss

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackConfig:
    """An l-infinity PGD attack.

    `step_size` defaults to ``2.5 * epsilon / steps``.
    """

    epsilon: float = 0.5
    steps: int = 20
    step_size: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ConfigurationError(
                f"epsilon must be non-negative (got {self.epsilon})"
            )
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1 (got {self.steps})")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError(
                f"step_size must be positive (got {self.step_size})"
            )

    @property
    def effective_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return PGD_STEP_FACTOR * self.epsilon / self.steps

    def to_dict(self) -> Dict[str, Any]:
        return {
            **asdict(self),
            "effective_step_size": self.effective_step_size,
            "random_start": False,
            "selection": "best-so-far",
        }


class PGDResult:
    """Adversarial patches and, optionally, the best-so-far loss trace.

    The trace has shape ``(steps + 1, n)``; row 0 is the clean loss.
    """

    __slots__ = ["patches", "trace"]

    def __init__(
        self, patches: FloatArray, trace: Optional[FloatArray] = None
    ) -> None:
        self.patches = patches
        self.trace = trace


def _signal_shift(
    strength: FloatArray,
    values: FloatArray,
    labels: IntArray,
    epsilon: float,
) -> FloatArray:
    """Return the loss-maximizing shift ``t`` of every signal value.

    The signal patch contributes ``y * strength * (value + t)^3`` to the
    margin, so only the two endpoints ``t = -epsilon * y`` and
    ``t = +epsilon * y`` need to be compared. Ties go to ``-epsilon * y``.
    """
    toward = -epsilon * labels
    away = epsilon * labels
    margin_toward = labels * strength * (values + toward) ** 3
    margin_away = labels * strength * (values + away) ** 3
    return np.where(margin_away < margin_toward, away, toward)


def perturb_signal_patches(
    weights: StudentWeights, dataset: Dataset, epsilon: float
) -> FloatArray:
    """Apply the training attack to every sample of `dataset`.

    Returns
    -------
    numpy.ndarray
        The ``(N, P, d)`` adversarial patches. Only the signal-patch entry
        along each sample's feature direction differs from the input.
    """
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be non-negative ({epsilon})")
    if weights.d != dataset.d:
        raise ShapeError(
            f"Weights have d={weights.d} but the dataset has d={dataset.d}"
        )

    directions = dataset.signal_directions
    strength = np.sum(weights.weights[:, directions] ** 3, axis=0)
    values = dataset.signal_values()
    shift = _signal_shift(strength, values, dataset.labels, epsilon)

    patches = np.array(dataset.patches)
    rows = np.arange(dataset.N)
    patches[rows, dataset.signal_index, directions] = values + shift
    return patches


def perturb_signal_patch(
    weights: StudentWeights, sample: Sample, epsilon: float
) -> Sample:
    """Apply the training attack to a single sample."""
    return sample.with_patches(
        perturb_signal_patches(
            weights, Dataset.from_samples([sample]), epsilon
        )[0]
    )


def _margins(
    weights: StudentWeights, patches: FloatArray, labels: IntArray
) -> FloatArray:
    return labels * forward(weights, patches)


def pgd_attack_batch(
    weights: StudentWeights,
    patches: FloatArray,
    labels: Union[Sequence[int], IntArray],
    config: AttackConfig,
    trace: bool = False,
) -> PGDResult:
    """Run l-infinity PGD on a stack of samples.

    Each step moves every coordinate by ``step_size`` along the sign of the
    loss gradient and clips back to the ``epsilon``-box around the clean
    patches. There is no random start. The iterate with the smallest
    margin, hence the largest loss, seen so far is returned.

    Parameters
    ----------
    weights : StudentWeights
        The attacked student.
    patches : numpy.ndarray
        Clean ``(n, P, d)`` patches.
    labels : array_like
        The ``(n,)`` labels.
    config : AttackConfig
        Budget, steps and step size.
    trace : bool
        Whether to record the best-so-far loss after every step.
    """
    clean = np.asarray(patches, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if clean.ndim != 3 or labels.shape != (clean.shape[0],):
        raise ShapeError(
            f"Expected (n, P, d) patches with (n,) labels; got "
            f"{clean.shape} and {labels.shape}"
        )

    epsilon = config.epsilon
    step = config.effective_step_size
    lower, upper = clean - epsilon, clean + epsilon

    current = np.array(clean)
    best = np.array(clean)
    best_margin = _margins(weights, best, labels)
    history = [logistic_loss(best_margin)] if trace else None

    for _ in range(config.steps):
        # The loss gradient is -y * psi(y f) * grad f; psi > 0 leaves the
        # sign unchanged and may underflow, so it is dropped.
        direction = np.sign(
            -labels[:, None, None] * input_gradient(weights, current)
        )
        current = np.clip(current + step * direction, lower, upper)

        margin = _margins(weights, current, labels)
        improved = margin < best_margin
        best[improved] = current[improved]
        best_margin = np.where(improved, margin, best_margin)

        if trace:
            history.append(logistic_loss(best_margin))

    return PGDResult(best, np.stack(history) if trace else None)


def pgd_attack(
    weights: StudentWeights, sample: Sample, config: AttackConfig
) -> Sample:
    """Run l-infinity PGD on a single sample."""
    result = pgd_attack_batch(
        weights, sample.patches[None], [sample.label], config
    )
    return sample.with_patches(result.patches[0])


def write_pgd_trace(trace: FloatArray, path: Union[str, pathlib.Path]) -> None:
    """Write a PGD loss trace as a long-format CSV (step, sample, loss)."""
    trace = np.asarray(trace, dtype=float)
    if trace.ndim == 1:
        trace = trace[:, None]
    rows = [
        (step, sample, trace[step, sample])
        for step in range(trace.shape[0])
        for sample in range(trace.shape[1])
    ]
    write_csv(path, ("step", "sample", "loss"), rows)


def memorized_patch_attack(
    weights: StudentWeights,
    vulnerable_patch: FloatArray,
    vulnerable_label: int,
    test_sample: Sample,
    epsilon: float,
    delta: float,
    dims: Sequence[int],
    sigma_n: float,
) -> Sample:
    """Replay a memorized unlearnable noise patch on a test sample.

    Every non-signal patch of `test_sample` receives

        -y * y_vuln * epsilon / (sigma_n * sqrt(2 ln(16 d N P / delta)))
        * x_vuln.

    Parameters
    ----------
    weights : StudentWeights
        The attacked student; only used to log the margin drop.
    vulnerable_patch : numpy.ndarray
        The memorized noise patch ``x_vuln``, a ``(d,)`` vector.
    vulnerable_label : int
        The label of the training sample owning ``x_vuln``.
    test_sample : Sample
        The sample to attack.
    epsilon : float
        The l-infinity budget.
    delta : float
        The failure probability entering the scale factor.
    dims : sequence of int
        The training dimensions ``(d, N, P)``.
    sigma_n : float
        The noise scale of the training distribution.

    Raises
    ------
    BudgetError
        If the perturbation leaves the ``epsilon``-ball, which happens
        exactly when ``x_vuln`` violates the max-coordinate concentration
        bound.
    """
    x_vuln = np.asarray(vulnerable_patch, dtype=float)
    if x_vuln.shape != (test_sample.d,):
        raise ShapeError(
            f"The vulnerable patch must have shape ({test_sample.d},); "
            f"got {x_vuln.shape}"
        )
    if epsilon == 0:
        return test_sample

    d, N, P = dims
    log_term = math.log(16 * d * N * P / delta)
    scale = epsilon / (sigma_n * math.sqrt(2 * log_term))
    perturbation = -test_sample.label * vulnerable_label * scale * x_vuln

    measured = float(np.abs(x_vuln).max())
    if np.abs(perturbation).max() > epsilon + 1e-12:
        raise BudgetError(
            f"Memorized-patch perturbation exceeds epsilon={epsilon}: "
            f"||x_vuln||_inf = {measured:.6g}",
            measured,
        )

    patches = np.array(test_sample.patches)
    patches[test_sample.noise_mask] += perturbation
    attacked = test_sample.with_patches(patches)

    logger.debug(
        "Memorized-patch attack moves the margin from %.6g to %.6g",
        test_sample.label * forward(weights, test_sample),
        attacked.label * forward(weights, attacked),
    )
    return attacked


def random_sign_attack(sample: Sample, epsilon: float, seed: int) -> Sample:
    """Add independent ``+-epsilon`` noise to every non-signal patch entry.

    This is the same-budget baseline against which the memorized-patch
    attack is compared.
    """
    rng = np.random.default_rng(seed)
    patches = np.array(sample.patches)
    mask = sample.noise_mask
    signs = rng.choice((-1.0, 1.0), size=patches[mask].shape)
    patches[mask] += epsilon * signs
    return sample.with_patches(patches)
