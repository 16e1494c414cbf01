# coding: utf-8
"""Provide data-quality checks on a generated dataset and initialization.

Two reports live here. `EventEReport` evaluates, literally, the eight
concentration properties under which the training dynamics are analysed.
`RegimeReport` evaluates the parameter-regime conditions with an explicit
absolute constant. Both are reported and logged, never enforced.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from typing import TYPE_CHECKING, Any, Dict, List, Optional

import numpy as np

from adsim.constants import EVENT_E_PROPERTIES
from adsim.errors import ConfigurationError, ShapeError
from adsim.model.data import Dataset, SyntheticConfig
from adsim.typing import RunArtifact
from adsim.utils import normL2

if TYPE_CHECKING:
    from adsim.model.network import StudentWeights

logger = logging.getLogger(__name__)


class BoundCheck(RunArtifact):
    """A measured statistic compared against a lower and/or upper bound."""

    __slots__ = [
        "name",
        "description",
        "measured_min",
        "measured_max",
        "lower",
        "upper",
    ]

    def __init__(
        self,
        name: str,
        description: str,
        measured_min: float,
        measured_max: float,
        lower: Optional[float] = None,
        upper: Optional[float] = None,
    ) -> None:
        self.name = name
        self.description = description
        self.measured_min = float(measured_min)
        self.measured_max = float(measured_max)
        self.lower = None if lower is None else float(lower)
        self.upper = None if upper is None else float(upper)

    @property
    def passed(self) -> bool:
        if self.lower is not None and not self.measured_min >= self.lower:
            return False
        if self.upper is not None and not self.measured_max <= self.upper:
            return False
        return True

    @property
    def worst(self) -> float:
        """The measured extreme with the smallest slack to its bound."""
        slacks = []
        if self.lower is not None:
            slacks.append((self.measured_min - self.lower, self.measured_min))
        if self.upper is not None:
            slacks.append((self.upper - self.measured_max, self.measured_max))
        if not slacks:
            return self.measured_max
        return min(slacks)[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "passed": self.passed,
            "worst": self.worst,
            "measured_min": self.measured_min,
            "measured_max": self.measured_max,
            "lower": self.lower,
            "upper": self.upper,
        }

    def __repr__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"BoundCheck({self.name}: {status}, worst={self.worst:.4g})"


class _Report(RunArtifact):
    """An ordered collection of bound checks."""

    def __init__(self, checks: List[BoundCheck]) -> None:
        self.checks: OrderedDict[str, BoundCheck] = OrderedDict(
            (check.name, check) for check in checks
        )

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks.values() if not c.passed]

    def __getitem__(self, name: str) -> BoundCheck:
        return self.checks[name]


class EventEReport(_Report):
    """Outcome of the concentration event on one dataset and initialization."""

    def __init__(self, checks: List[BoundCheck], delta: float) -> None:
        super().__init__(checks)
        self.delta = delta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "passed": self.passed,
            "properties": [c.to_dict() for c in self.checks.values()],
        }


class RegimeReport(_Report):
    """Outcome of the parameter-regime conditions at constant ``C``."""

    def __init__(self, checks: List[BoundCheck], C: float) -> None:
        super().__init__(checks)
        self.C = C

    def to_dict(self) -> Dict[str, Any]:
        return {
            "C": self.C,
            "passed": self.passed,
            "conditions": [c.to_dict() for c in self.checks.values()],
        }


def _check(
    name: str,
    values: np.ndarray,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
) -> BoundCheck:
    values = np.asarray(values, dtype=float)
    return BoundCheck(
        name,
        EVENT_E_PROPERTIES[name],
        values.min() if values.size else 0.0,
        values.max() if values.size else 0.0,
        lower,
        upper,
    )


def check_event_E(
    dataset: Dataset,
    init_weights: StudentWeights,
    sigma_0: float,
    delta: float,
    sigma_n: Optional[float] = None,
) -> EventEReport:
    """Evaluate the concentration properties P1-P8.

    Parameters
    ----------
    dataset : Dataset
        The training set.
    init_weights : StudentWeights
        The initial student weights, drawn at scale `sigma_0`.
    sigma_0 : float
        Initialization scale used in the thresholds.
    delta : float
        Failure-probability budget in (0, 1).
    sigma_n : float, optional
        Noise scale; read from ``dataset.config`` when omitted.

    Returns
    -------
    EventEReport
        One `BoundCheck` per property with the exact thresholds.

    Raises
    ------
    ShapeError
        If the weights and the dataset disagree on ``d``.
    ConfigurationError
        If `delta` is outside (0, 1) or no noise scale is available.
    """
    W = np.asarray(init_weights.weights, dtype=float)
    m, d = W.shape
    if d != dataset.d:
        raise ShapeError(
            f"Weights have d={d} but the dataset has d={dataset.d}"
        )
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1) (got {delta})")
    if sigma_n is None:
        if dataset.config is None:
            raise ConfigurationError(
                "sigma_n is required for a dataset without a config"
            )
        sigma_n = dataset.config.sigma_n

    N, P = dataset.N, dataset.P
    mask = dataset.noise_mask
    noise = dataset.patches[mask]
    labels = np.broadcast_to(dataset.labels[:, None], mask.shape)[mask]

    gram = noise @ noise.T
    np.fill_diagonal(gram, 0.0)
    responses = noise @ W.T
    aligned = (labels[:, None] * responses).max(axis=1)

    s2 = sigma_n**2
    log_e1 = math.log(16 * m / delta)
    log_ip = math.log(16 * N * m * P / delta)
    ip_bound = 2 * sigma_0 * sigma_n * math.sqrt(d * log_ip)
    e1_bound = sigma_0 * math.sqrt(2 * log_e1)

    checks = [
        _check(
            "P1",
            normL2(noise) ** 2,
            lower=0.5 * s2 * d,
            upper=1.5 * s2 * d,
        ),
        _check(
            "P2",
            np.abs(gram).max(axis=1) if gram.size else np.zeros(1),
            upper=2 * s2 * math.sqrt(d * math.log(16 * N**2 * P**2 / delta)),
        ),
        _check(
            "P3",
            np.abs(noise).max(axis=1),
            upper=sigma_n * math.sqrt(2 * math.log(16 * d * N * P / delta)),
        ),
        _check(
            "P4",
            normL2(W),
            upper=2 * sigma_0 * math.sqrt(d),
        ),
        _check("P5", np.abs(W[:, 0]), upper=e1_bound),
        _check("P6", np.abs(responses), upper=ip_bound),
        _check(
            "P7",
            np.array([W[:, 0].max()]),
            lower=0.5 * sigma_0,
            upper=e1_bound,
        ),
        _check(
            "P8",
            aligned,
            lower=0.25 * sigma_0 * sigma_n * math.sqrt(d),
            upper=ip_bound,
        ),
    ]

    report = EventEReport(checks, delta)
    if not report.passed:
        logger.warning(
            "Concentration event fails on %s (delta=%g); the run proceeds",
            ", ".join(report.failures),
            delta,
        )
    return report


def check_regime_conditions(
    config: SyntheticConfig,
    m: int,
    sigma_0: float,
    eta: float,
    epsilon: float,
    T: int,
    gamma: float,
    delta: float = 0.05,
    C: float = 1.0,
) -> RegimeReport:
    """Evaluate the parameter-regime conditions with constant `C`.

    Each condition becomes a `BoundCheck` whose measured value is the
    parameter in question. The conditions are sufficient, not necessary,
    so a failure is logged as a warning and nothing else happens.
    """
    d, N, P = config.d, config.N, config.P
    alpha, sigma_n, p_un = config.alpha, config.sigma_n, config.p_un

    log_main = math.log(T * N * m * P / delta)
    log_full = math.log(T * d * N * m * P / delta)
    log_eps = math.log(T * d * N * P / delta)

    def single(
        name: str,
        value: float,
        lower: Optional[float] = None,
        upper: Optional[float] = None,
    ) -> BoundCheck:
        return BoundCheck(name, name, value, value, lower, upper)

    sigma_0_cap = (
        min(
            1 / (m ** (2 / 3) * P ** (2 / 3) * sigma_n * math.sqrt(d)),
            1 / (alpha * m ** (2 / 3)),
            1 / (sigma_n * m**2 * math.sqrt(P) * d),
        )
        / (C * log_full)
    )
    eta_cap = min(1 / (alpha**3 * sigma_0), 1 / (sigma_n**2 * d), 1 / alpha**2)

    checks = [
        single(
            "horizon",
            T,
            lower=(
                C * N / (eta * sigma_0 * sigma_n**3 * d**1.5)
                if eta > 0
                else math.inf
            ),
        ),
        single("dimension", d, lower=C * m**2 * P**2 * N**2 * log_main**4),
        single(
            "signal_strength",
            alpha,
            lower=(
                C * sigma_n * math.sqrt(d) * log_main
                / (N * (1 - p_un)) ** (1 / 3)
                if p_un < 1
                else math.inf
            ),
        ),
        single("init_scale", sigma_0, upper=sigma_0_cap),
        single("learning_rate", eta, upper=eta_cap / (C * log_main)),
        single(
            "budget",
            epsilon,
            lower=C * sigma_n * m * math.sqrt(P) * log_eps,
            upper=min(alpha, 1 / (m * sigma_0 * d)) / C,
        ),
        single(
            "width",
            m,
            lower=C * math.log(N * P / delta),
            upper=C * math.log(d) ** C,
        ),
        single("patches", P, lower=2, upper=C),
        single("teacher_margin", gamma, lower=C * d),
    ]
    if p_un > 0:
        checks.append(
            single(
                "sparsity",
                p_un,
                lower=C / N,
                upper=math.log(d) / (C * N),
            )
        )
        checks.append(
            single("sample_size", N, lower=C * m * P * log_full)
        )

    report = RegimeReport(checks, C)
    if not report.passed:
        logger.warning(
            "Regime conditions at C=%g not met: %s",
            C,
            ", ".join(report.failures),
        )
    return report
