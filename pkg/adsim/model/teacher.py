# coding: utf-8
"""Provide the teacher margin oracles used by adversarial distillation.

A teacher is described only by the margins ``y * f_T(X)`` it produces: the
teacher margin ``gamma`` on learnable samples, and a kind-dependent margin
on unlearnable ones. Teacher outputs never depend on noise patch values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np

from adsim.errors import ConfigurationError
from adsim.model.data import Dataset, Sample
from adsim.typing import FloatArray, RunArtifact
from adsim.utils import binary_entropy, sigmoid

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


class TeacherKind(str, Enum):
    GOOD = "good"
    BAD = "bad"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TeacherSpec(RunArtifact):
    """A teacher configuration.

    Attributes
    ----------
    kind : TeacherKind
        ``GOOD`` is uncertain (margin 0) on unlearnable samples, ``BAD`` is
        confident (margin ``gamma``) on them, and ``CUSTOM`` uses
        `custom_unlearnable_margin`.
    gamma : float
        Teacher margin on learnable samples.
    custom_unlearnable_margin : float
        Margin on unlearnable samples, read only by ``CUSTOM`` teachers.
    """

    kind: TeacherKind = TeacherKind.GOOD
    gamma: float = 10.0
    custom_unlearnable_margin: float = 0.0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", TeacherKind(self.kind))
        except ValueError:
            raise ConfigurationError(
                f"Unknown teacher kind {self.kind!r}; expected one of "
                f"{[k.value for k in TeacherKind]}"
            ) from None
        if not self.gamma >= 0:
            raise ConfigurationError(
                f"gamma must be non-negative (got {self.gamma})"
            )
        if not np.isfinite(self.custom_unlearnable_margin):
            raise ConfigurationError(
                "custom_unlearnable_margin must be finite"
            )

    @classmethod
    def good(cls, gamma: float = 10.0) -> TeacherSpec:
        return cls(TeacherKind.GOOD, gamma)

    @classmethod
    def bad(cls, gamma: float = 10.0) -> TeacherSpec:
        return cls(TeacherKind.BAD, gamma)

    @classmethod
    def custom(cls, margin: float, gamma: float = 10.0) -> TeacherSpec:
        return cls(TeacherKind.CUSTOM, gamma, margin)

    @property
    def unlearnable_margin(self) -> float:
        if self.kind is TeacherKind.GOOD:
            return 0.0
        if self.kind is TeacherKind.BAD:
            return self.gamma
        return self.custom_unlearnable_margin

    @property
    def label(self) -> str:
        """Method label as used in sweep tables, e.g. ``AD-Good``."""
        if self.kind is TeacherKind.CUSTOM:
            return f"AD-Custom({self.custom_unlearnable_margin:g})"
        return f"AD-{self.kind.value.capitalize()}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "gamma": self.gamma,
            "custom_unlearnable_margin": self.custom_unlearnable_margin,
            "unlearnable_margin": self.unlearnable_margin,
        }


@dataclass(frozen=True)
class SoftLabel:
    """Teacher probability on the true label and on the opposite one."""

    p_plus: float
    p_minus: float


def teacher_margin(spec: TeacherSpec, sample: Sample) -> float:
    """Return ``y * f_T(X)`` for one sample."""
    return spec.gamma if sample.learnable else spec.unlearnable_margin


def teacher_margins(spec: TeacherSpec, dataset: Dataset) -> FloatArray:
    """Return the teacher margin of every sample of `dataset`."""
    return np.where(dataset.learnable, spec.gamma, spec.unlearnable_margin)


def soft_label(spec: TeacherSpec, sample: Sample) -> SoftLabel:
    """Teacher probabilities, clipped to the open interval (0, 1)."""
    margin = teacher_margin(spec, sample)
    probabilities = np.clip(
        sigmoid(np.array([margin, -margin])), _TINY, _BELOW_ONE
    )
    return SoftLabel(float(probabilities[0]), float(probabilities[1]))


def teacher_entropy(spec: TeacherSpec, sample: Sample) -> float:
    """Binary predictive entropy of the teacher, in nats."""
    return float(binary_entropy(teacher_margin(spec, sample)))


def teacher_entropy_adversarial(
    spec: TeacherSpec,
    sample: Sample,
    adversarial: Optional[Union[Sample, FloatArray]] = None,
) -> float:
    """Teacher entropy evaluated on an adversarial example of `sample`.

    The margin oracle reads only the label and the learnability flag of the
    clean sample, both of which an attack leaves unchanged; the perturbed
    patches are accepted so call sites mirror the evaluation protocol.
    """
    if isinstance(adversarial, Sample) and (
        adversarial.learnable != sample.learnable
        or adversarial.label != sample.label
    ):
        raise ConfigurationError(
            "The adversarial example must share label and learnability "
            "with its clean sample"
        )
    return teacher_entropy(spec, sample)
