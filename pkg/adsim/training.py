# coding: utf-8
"""Full-batch gradient descent for adversarial training and distillation.

At every iteration the training adversarial examples are regenerated
against the current weights, each sample contributes a scalar loss factor
(``psi`` for AT, the soft-target factor for AD), and the filters move by

    W <- W + (eta / N) sum_i y_i g_i grad f(X~_i),

followed by the projection that keeps every filter orthogonal to the
unlearnable feature. Noise coefficients are updated in lockstep.
"""

from __future__ import annotations

import logging
import pathlib
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

import adsim
from adsim.constants import (
    DECOMPOSITION_TOLERANCE,
    DIVERGENCE_THRESHOLD,
    METRICS_COLUMNS,
)
from adsim.errors import (
    ConfigurationError,
    DivergenceError,
    PropertyViolation,
    ShapeError,
)
from adsim.instrumentation import (
    HittingTimes,
    NoiseCoefficients,
    ShiftedCoefficients,
    TrainingTrace,
    detect_hitting_times,
    hitting_cutoffs,
    max_noise_response,
    max_unlearnable_noise_response,
    rho_hat_max,
    shifted_coefficients,
    signal_cap,
    update_noise_coefficients,
    verify_decomposition,
)
from adsim.io import save_dataset, save_weights, write_csv, write_json
from adsim.model.adversary import (
    AttackConfig,
    perturb_signal_patches,
    pgd_attack_batch,
)
from adsim.model.data import Dataset, Sample
from adsim.model.network import (
    StudentWeights,
    forward,
    project_orthogonal_to_v,
    weighted_logit_gradient,
)
from adsim.model.teacher import TeacherSpec, teacher_margins
from adsim.typing import FloatArray, Real, RunArtifact
from adsim.utils import logistic_loss, psi, sigmoid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and evaluation settings of one run.

    A run optimizes the AT objective when `teacher` is None and the AD
    objective with that teacher otherwise.
    """

    eta: float = 0.05
    epsilon: float = 0.5
    T: int = 4000
    teacher: Optional[TeacherSpec] = None
    log_every: int = 10
    eval_attack: AttackConfig = field(default_factory=AttackConfig)
    test_count: int = 100
    seed: int = 0
    c0: float = 1.0
    c1: float = 1.0
    check_properties: bool = True
    record_margins: bool = False
    noise_multiple: float = 3.0
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self) -> None:
        if not self.eta >= 0:
            raise ConfigurationError(
                f"eta must be non-negative (got {self.eta})"
            )
        if not self.epsilon >= 0:
            raise ConfigurationError(
                f"epsilon must be non-negative (got {self.epsilon})"
            )
        if self.T < 1:
            raise ConfigurationError(f"T must be >= 1 (got {self.T})")
        if self.log_every < 1:
            raise ConfigurationError(
                f"log_every must be >= 1 (got {self.log_every})"
            )
        if self.test_count < 1:
            raise ConfigurationError(
                f"test_count must be >= 1 (got {self.test_count})"
            )
        if not (self.c0 > 0 and self.c1 > 0):
            raise ConfigurationError("c0 and c1 must be positive")

    @property
    def objective(self) -> str:
        """``AT`` or the teacher label, e.g. ``AD-Good``."""
        return "AT" if self.teacher is None else self.teacher.label

    def replace(self, **changes: Any) -> TrainConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        return TrainConfig(**{**values, **changes})

    def to_dict(self) -> Dict[str, Any]:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["objective"] = self.objective
        return values

    @classmethod
    def from_dict(cls, content: Dict[str, Any]) -> TrainConfig:
        """Rebuild a config from the output of `to_dict` read as JSON."""
        values = {
            f.name: content[f.name] for f in fields(cls) if f.name in content
        }
        teacher = values.get("teacher")
        if isinstance(teacher, dict):
            values["teacher"] = TeacherSpec(
                teacher["kind"],
                teacher["gamma"],
                teacher["custom_unlearnable_margin"],
            )
        attack = values.get("eval_attack")
        if isinstance(attack, dict):
            values["eval_attack"] = AttackConfig(
                attack["epsilon"], attack["steps"], attack["step_size"]
            )
        return cls(**values)


def loss_grad_factor_at(student_margin: Real) -> Real:
    """Factor ``psi(z)``; the AT loss derivative in the logit is ``-y psi``."""
    return psi(student_margin)


def loss_grad_factor_ad(student_margin: Real, teacher_margin: Real) -> Real:
    """Soft-target factor of the AD loss.

    ``sigma(m) psi(z) - sigma(-m) psi(-z)`` for student margin ``z`` and
    teacher margin ``m``; the AD loss derivative in the logit is
    ``-y`` times this factor.
    """
    z = np.asarray(student_margin, dtype=float)
    m = np.asarray(teacher_margin, dtype=float)
    return sigmoid(m) * psi(z) - sigmoid(-m) * psi(-z)


def at_loss(student_margin: Real) -> Real:
    return logistic_loss(student_margin)


def ad_loss(student_margin: Real, teacher_margin: Real) -> Real:
    """Cross-entropy of the student against the teacher soft label."""
    z = np.asarray(student_margin, dtype=float)
    m = np.asarray(teacher_margin, dtype=float)
    return sigmoid(m) * logistic_loss(z) + sigmoid(-m) * logistic_loss(-z)


def _stack(samples: Sequence[Sample]) -> tuple:
    if not samples:
        raise ConfigurationError("At least one evaluation sample is needed")
    patches = np.stack([s.patches for s in samples])
    labels = np.array([s.label for s in samples], dtype=float)
    return patches, labels


def robust_accuracy(
    weights: StudentWeights,
    samples: Union[Sequence[Sample], Dataset],
    attack: AttackConfig,
) -> float:
    """Fraction of samples with ``y f(X') > 0`` under PGD.

    A zero margin counts as an error.
    """
    if isinstance(samples, Dataset):
        patches, labels = samples.patches, samples.labels
    else:
        patches, labels = _stack(samples)
    attacked = pgd_attack_batch(weights, patches, labels, attack).patches
    return float(np.mean(labels * forward(weights, attacked) > 0))


@dataclass
class MetricsRecord:
    """One logged evaluation of the current weights."""

    iteration: int
    train_loss: float
    robust_train_acc: float
    robust_train_acc_learnable: Optional[float]
    robust_train_acc_unlearnable: Optional[float]
    robust_test_acc: float
    clean_test_acc: float
    gen_gap: float
    max_signal_weight: float
    rho_hat_max: float
    max_noise_response: float
    max_unlearnable_noise_response: Optional[float]
    signal_cap_ok: bool
    events: List[str] = field(default_factory=list)
    margins: Optional[List[float]] = None

    def row(self) -> tuple:
        return tuple(getattr(self, name) for name in METRICS_COLUMNS)


class MetricsLog(RunArtifact):
    """The logged evaluations of a run, in increasing iteration order."""

    __slots__ = ["records"]

    def __init__(self, records: Optional[List[MetricsRecord]] = None) -> None:
        self.records: List[MetricsRecord] = []
        for record in records or []:
            self.append(record)

    def append(self, record: MetricsRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise PropertyViolation(
                f"Logged iterations must increase: {record.iteration} after "
                f"{self.records[-1].iteration}",
                record.iteration,
            )
        self.records.append(record)

    def column(self, name: str) -> FloatArray:
        return np.array(
            [getattr(r, name) for r in self.records], dtype=float
        )

    @property
    def iterations(self) -> List[int]:
        return [r.iteration for r in self.records]

    def to_csv(self, path: Union[str, pathlib.Path]) -> pathlib.Path:
        return write_csv(
            path, METRICS_COLUMNS, [r.row() for r in self.records]
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"columns": list(METRICS_COLUMNS), "records": self.records}

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> MetricsRecord:
        return self.records[index]


class Checkpoint:
    """Weights saved at one iteration, with the robust test accuracy there."""

    __slots__ = ["iteration", "weights", "robust_test_acc"]

    def __init__(
        self, iteration: int, weights: StudentWeights, robust_test_acc: float
    ) -> None:
        self.iteration = iteration
        self.weights = weights
        self.robust_test_acc = robust_test_acc


class Snapshot:
    """Weights and coefficients at a decomposition checkpoint."""

    __slots__ = ["iteration", "weights", "coefficients", "residual"]

    def __init__(
        self,
        iteration: int,
        weights: StudentWeights,
        coefficients: NoiseCoefficients,
        residual: float,
    ) -> None:
        self.iteration = iteration
        self.weights = weights
        self.coefficients = coefficients
        self.residual = residual


class TrainResult(RunArtifact):
    """Everything a run produces."""

    def __init__(
        self,
        config: TrainConfig,
        init_weights: StudentWeights,
        final_weights: StudentWeights,
        log: MetricsLog,
        hitting_times: HittingTimes,
        peak: Checkpoint,
        snapshots: List[Snapshot],
        trace: TrainingTrace,
        coefficients: NoiseCoefficients,
        dataset: Dataset,
        noise_bounded: bool,
    ) -> None:
        self.config = config
        self.init_weights = init_weights
        self.final_weights = final_weights
        self.log = log
        self.hitting_times = hitting_times
        self.peak = peak
        self.snapshots = snapshots
        self.trace = trace
        self.coefficients = coefficients
        self.dataset = dataset
        self.noise_bounded = noise_bounded
        self.extra: Dict[str, Any] = {}

    @property
    def final_robust_test_acc(self) -> float:
        return self.log[-1].robust_test_acc

    @property
    def final_robust_train_acc(self) -> float:
        return self.log[-1].robust_train_acc

    @property
    def peak_robust_train_acc(self) -> float:
        return float(self.log.column("robust_train_acc").max())

    @property
    def degradation(self) -> float:
        return self.peak.robust_test_acc - self.final_robust_test_acc

    def metadata(self) -> Dict[str, Any]:
        """JSON metadata of the run: configs, seeds, reports, outcomes."""
        return {
            "version": adsim.__version__,
            "objective": self.config.objective,
            "train": self.config,
            "data": self.dataset.config,
            "model": {
                "m": self.init_weights.m,
                "sigma_0": self.init_weights.sigma_0,
            },
            "dataset_fingerprint": self.dataset.fingerprint(),
            "n_unlearnable": int(self.dataset.unlearnable_indices.size),
            "hitting_times": self.hitting_times,
            "peak": {
                "iteration": self.peak.iteration,
                "robust_test_acc": self.peak.robust_test_acc,
            },
            "final": {
                "robust_train_acc": self.final_robust_train_acc,
                "robust_test_acc": self.final_robust_test_acc,
                "degradation": self.degradation,
            },
            "decomposition_residuals": {
                str(s.iteration): s.residual for s in self.snapshots
            },
            "noise_bounded": self.noise_bounded,
            **self.extra,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {**self.metadata(), "metrics": self.log}

    def save(self, directory: Union[str, pathlib.Path]) -> pathlib.Path:
        """Write the run into an existing directory."""
        directory = pathlib.Path(directory)
        self.log.to_csv(directory / "metrics.csv")
        write_json(directory / "run.json", self.to_dict())
        save_dataset(directory / "dataset.npz", self.dataset)
        save_weights(directory / "weights_init.npz", self.init_weights)
        save_weights(directory / "weights_final.npz", self.final_weights)
        save_weights(directory / "weights_peak.npz", self.peak.weights)
        for snapshot in self.snapshots:
            save_weights(
                directory / f"weights_{snapshot.iteration}.npz",
                snapshot.weights,
            )
            snapshot.coefficients.save(
                directory / f"rho_{snapshot.iteration}.npz"
            )
        logger.info("Saved run to %s", directory)
        return directory


class _Guard:
    """Per-step invariant checks of the training dynamics."""

    def __init__(self, dataset: Dataset, config: TrainConfig) -> None:
        self.enabled = config.check_properties
        self.objective = config.objective
        self.eta = config.eta
        self.N = dataset.N
        self.learnable = dataset.learnable

    def check(
        self,
        t: int,
        before: StudentWeights,
        after: FloatArray,
        factors: FloatArray,
        adversarial: FloatArray,
        dataset: Dataset,
    ) -> None:
        if not self.enabled:
            return

        if np.any(after[:, -1] != 0.0):
            raise PropertyViolation(
                "Filters are no longer orthogonal to the unlearnable "
                "feature",
                t,
            )

        signed = dataset.labels * dataset.signal_values(adversarial)
        learnable = self.learnable
        # Random labels or an oversized budget flip the learnable signal;
        # the monotone growth of the signal weights only holds without.
        if not learnable.any() or np.any(signed[learnable] <= 0):
            return
        if self.objective != "AT" and np.any(factors[learnable] < 0):
            return

        w_before = before.weights[:, 0]
        increment = after[:, 0] - w_before
        # Rounding of w + dw is the only admissible error.
        roundoff = 4 * np.finfo(float).eps * np.abs(w_before) + 1e-300
        if np.any(increment < -roundoff):
            r = int(np.argmin(increment))
            raise PropertyViolation(
                f"Signal weight {r} decreased by {-increment[r]:.3e}", t
            )

        if self.objective != "AT":
            return

        total = float(np.sum(factors[learnable]))
        magnitudes = signed[learnable]
        base = 3.0 * self.eta / self.N * w_before**2 * total
        lower = base * magnitudes.min() ** 3
        upper = base * magnitudes.max() ** 3
        slack = 1e-9 * upper + roundoff
        if np.any(increment < lower - slack) or np.any(
            increment > upper + slack
        ):
            raise PropertyViolation(
                "Signal increment left its bracket "
                f"[{lower.min():.3e}, {upper.max():.3e}]",
                t,
            )


def _subset_mean(values: FloatArray, mask: FloatArray) -> Optional[float]:
    return float(np.mean(values[mask])) if mask.any() else None


def _check_loss(t: int, loss: float, threshold: float) -> None:
    if not np.isfinite(loss) or abs(loss) > threshold:
        raise DivergenceError(
            f"Training loss diverged at iteration {t}: {loss}", t, loss
        )


def _check_weights(t: int, weights: FloatArray, threshold: float) -> None:
    largest = float(np.max(np.abs(weights)))
    if not np.isfinite(largest) or largest > threshold:
        raise DivergenceError(
            f"Weights diverged at iteration {t}: max |w| = {largest}",
            t,
            largest,
        )


def train(
    dataset: Dataset,
    init: StudentWeights,
    config: TrainConfig,
    test_set: Sequence[Sample],
) -> TrainResult:
    """Train the student from `init` on `dataset`.

    Parameters
    ----------
    dataset : Dataset
        The training set; its config supplies the hitting-time cutoffs.
    init : StudentWeights
        The initial filters.
    config : TrainConfig
        Optimization, objective and evaluation settings.
    test_set : sequence of Sample
        Learnable test samples on which robust test accuracy is measured.

    Returns
    -------
    TrainResult
        Final weights, metrics log, hitting times, peak checkpoint,
        decomposition snapshots and the full-resolution trace.

    Raises
    ------
    DivergenceError
        If the loss or the weights become non-finite or exceed the
        divergence threshold.
    PropertyViolation
        If a runtime invariant fails while ``config.check_properties``.
    """
    if init.d != dataset.d:
        raise ShapeError(
            f"Weights have d={init.d} but the dataset has d={dataset.d}"
        )
    if dataset.config is None:
        raise ConfigurationError("Training needs a dataset with its config")

    T, eta, epsilon = config.T, config.eta, config.epsilon
    N, labels = dataset.N, dataset.labels
    test_patches, test_labels = _stack(test_set)
    teacher = (
        None
        if config.teacher is None
        else teacher_margins(config.teacher, dataset)
    )

    weights = project_orthogonal_to_v(init)
    coeffs = NoiseCoefficients.zeros(
        N, dataset.P, init.m, signed=teacher is not None
    )
    alignment = shifted_coefficients(coeffs, init, dataset).rho_hat
    has_unlearnable = bool(dataset.unlearnable_indices.size)
    cap = signal_cap(T, dataset.config.alpha)
    initial_noise = max_noise_response(weights, dataset)
    noise_bounded = True
    # Memorization of S_U noise is expected under AT and the Bad teacher.
    noise_level = (
        logging.WARNING
        if config.objective == "AD-Good" or not has_unlearnable
        else logging.INFO
    )

    guard = _Guard(dataset, config)
    checkpoints = sorted({T // 4, T // 2, T})
    snapshots: List[Snapshot] = []
    log = MetricsLog()
    signal_series: List[float] = []
    rho_hat_series: List[float] = []
    peak: Optional[Checkpoint] = None
    cap_warned = False
    t0_cutoff, t1_cutoff = hitting_cutoffs(
        config.c0, config.c1, dataset.config, init.m
    )
    cutoffs = {"T0": t0_cutoff, "T1": t1_cutoff}
    fired: Dict[str, Optional[int]] = {"T0": None, "T1": None}
    watched = ["T0", "T1"] if has_unlearnable else ["T0"]
    pending: List[str] = []

    logger.info(
        "Training %s for T=%d (eta=%g, epsilon=%g) on %r",
        config.objective,
        T,
        eta,
        epsilon,
        dataset,
    )

    for t in range(T + 1):
        adversarial = perturb_signal_patches(weights, dataset, epsilon)
        with np.errstate(over="ignore", invalid="ignore"):
            margins = labels * forward(weights, adversarial)
            if teacher is None:
                factors = loss_grad_factor_at(margins)
                loss = float(np.mean(at_loss(margins)))
            else:
                factors = loss_grad_factor_ad(margins, teacher)
                loss = float(np.mean(ad_loss(margins, teacher)))
        _check_loss(t, loss, config.divergence_threshold)

        max_signal = float(weights.weights[:, 0].max())
        shifted = ShiftedCoefficients(coeffs.rho + alignment)
        signal_series.append(max_signal)
        rho_hat_series.append(rho_hat_max(shifted, dataset))
        values = {"T0": max_signal, "T1": rho_hat_series[-1]}
        for name in watched:
            if fired[name] is None and values[name] > cutoffs[name]:
                fired[name] = t
                pending.append(name)

        if max_signal > cap and not cap_warned:
            logger.warning(
                "Signal weight %.4g exceeds the cap %.4g at iteration %d",
                max_signal,
                cap,
                t,
            )
            cap_warned = True

        if noise_bounded and (
            max_noise_response(weights, dataset)
            > config.noise_multiple * initial_noise
        ):
            logger.log(
                noise_level,
                "Noise response exceeds %g times its initial value at "
                "iteration %d",
                config.noise_multiple,
                t,
            )
            noise_bounded = False

        if t in checkpoints:
            residual = verify_decomposition(
                coeffs, weights, init, dataset, relative=True
            )
            snapshots.append(Snapshot(t, weights, coeffs, residual))
            logger.debug("Decomposition residual at %d: %.3e", t, residual)
            if config.check_properties and residual > DECOMPOSITION_TOLERANCE:
                raise PropertyViolation(
                    f"Decomposition residual {residual:.3e} exceeds "
                    f"{DECOMPOSITION_TOLERANCE:g}",
                    t,
                )

        if t > 0 and (t % config.log_every == 0 or t == T):
            correct = margins > 0
            attacked = pgd_attack_batch(
                weights, test_patches, test_labels, config.eval_attack
            ).patches
            robust_test = float(
                np.mean(test_labels * forward(weights, attacked) > 0)
            )
            clean_test = float(
                np.mean(test_labels * forward(weights, test_patches) > 0)
            )
            robust_train = float(np.mean(correct))
            record = MetricsRecord(
                iteration=t,
                train_loss=loss,
                robust_train_acc=robust_train,
                robust_train_acc_learnable=_subset_mean(
                    correct, dataset.learnable
                ),
                robust_train_acc_unlearnable=_subset_mean(
                    correct, ~dataset.learnable
                ),
                robust_test_acc=robust_test,
                clean_test_acc=clean_test,
                gen_gap=robust_train - robust_test,
                max_signal_weight=max_signal,
                rho_hat_max=rho_hat_series[-1],
                max_noise_response=max_noise_response(weights, dataset),
                max_unlearnable_noise_response=(
                    max_unlearnable_noise_response(weights, dataset).value
                    if has_unlearnable
                    else None
                ),
                signal_cap_ok=max_signal <= cap,
                events=pending,
                margins=margins.tolist() if config.record_margins else None,
            )
            log.append(record)
            pending = []
            logger.debug(
                "t=%d loss=%.4g robust train=%.3f test=%.3f",
                t,
                loss,
                robust_train,
                robust_test,
            )
            if peak is None or robust_test > peak.robust_test_acc:
                peak = Checkpoint(t, weights, robust_test)

        if t == T:
            break

        step = weighted_logit_gradient(weights, adversarial, labels * factors)
        with np.errstate(over="ignore", invalid="ignore"):
            updated = weights.weights + (eta / N) * step
        updated[:, -1] = 0.0
        _check_weights(t + 1, updated, config.divergence_threshold)

        guard.check(t, weights, updated, factors, adversarial, dataset)
        coeffs = update_noise_coefficients(
            coeffs, weights, factors, dataset, eta
        )
        weights = StudentWeights(updated, init.sigma_0)

    trace = TrainingTrace(np.array(signal_series), np.array(rho_hat_series))
    hitting = detect_hitting_times(
        trace,
        config.c0,
        config.c1,
        dataset.config,
        init.m,
        has_unlearnable,
    )
    if (
        config.objective == "AT"
        and has_unlearnable
        and hitting.ordered is False
    ):
        logger.warning(
            "Hitting times out of order: T0=%s, T1=%s", hitting.T0, hitting.T1
        )

    logger.info(
        "Finished %s: robust test %.3f (peak %.3f at %d), T0=%s, T1=%s",
        config.objective,
        log[-1].robust_test_acc,
        peak.robust_test_acc,
        peak.iteration,
        hitting.T0,
        hitting.T1,
    )

    return TrainResult(
        config,
        init,
        weights,
        log,
        hitting,
        peak,
        snapshots,
        trace,
        coeffs,
        dataset,
        noise_bounded,
    )
