# coding: utf-8
"""Orchestrate multi-run studies.

Three studies are provided: the dichotomy sweep over the unlearnable
fraction and the training methods, the identification of the learnable
and unlearnable subsets from an ensemble of peak checkpoints, and the
correlation between teacher entropy and distilled robustness.
"""

from __future__ import annotations

import logging
import math
import os
import pathlib
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from adsim.constants import SWEEP_COLUMNS
from adsim.errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    PropertyViolation,
)
from adsim.instrumentation import theoretical_horizons
from adsim.io import write_csv
from adsim.model.adversary import AttackConfig, pgd_attack_batch
from adsim.model.data import (
    Dataset,
    Sample,
    SyntheticConfig,
    generate_dataset,
    sample_test_learnable,
)
from adsim.model.events import check_event_E, check_regime_conditions
from adsim.model.network import (
    ModelConfig,
    StudentWeights,
    forward,
    init_weights,
)
from adsim.model.teacher import TeacherSpec, teacher_entropy_adversarial
from adsim.training import TrainConfig, TrainResult, train
from adsim.typing import IntArray, RunArtifact
from adsim.utils import derive_seeds

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]

_CUSTOM = re.compile(r"^AD-Custom\((?P<margin>[^)]+)\)$")


def parse_method(method: str, gamma: float) -> Optional[TeacherSpec]:
    """Translate a method label into a teacher (None for AT).

    Labels are ``AT``, ``AD-Good``, ``AD-Bad`` and ``AD-Custom(<margin>)``.
    """
    if method == "AT":
        return None
    if method == "AD-Good":
        return TeacherSpec.good(gamma)
    if method == "AD-Bad":
        return TeacherSpec.bad(gamma)
    if (match := _CUSTOM.match(method)) is not None:
        try:
            return TeacherSpec.custom(float(match["margin"]), gamma)
        except ValueError:
            pass
    raise ConfigurationError(
        f"Unknown method {method!r}; expected AT, AD-Good, AD-Bad or "
        "AD-Custom(<margin>)"
    )


@dataclass(frozen=True)
class SweepSpec:
    """A grid of runs sharing one base configuration."""

    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    p_un_values: Tuple[float, ...] = (0.0, 0.05, 0.1, 0.2)
    methods: Tuple[str, ...] = ("AT", "AD-Good", "AD-Bad")
    seeds: Tuple[int, ...] = (0, 1, 2)
    workers: Optional[int] = 1
    delta: float = 0.05
    gamma: float = 10.0

    def __post_init__(self) -> None:
        for name in ("p_un_values", "methods", "seeds"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigurationError(f"sweep.{name} must not be empty")
            object.__setattr__(self, name, values)
        for method in self.methods:
            parse_method(method, self.gamma)
        for p_un in self.p_un_values:
            self.data.replace(p_un=p_un)
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError(
                f"workers must be positive (got {self.workers})"
            )

    @property
    def cells(self) -> List[Tuple[float, str, int]]:
        """Every (p_un, method, seed) cell, in table order."""
        return [
            (p_un, method, seed)
            for p_un in self.p_un_values
            for method in self.methods
            for seed in self.seeds
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def run_experiment(
    data: SyntheticConfig,
    model: ModelConfig,
    config: TrainConfig,
    delta: float = 0.05,
) -> TrainResult:
    """Generate data, initialize, check the data events and train.

    The dataset depends on `data` only, the initialization on
    ``model.seed`` and the test set on ``config.seed``.
    """
    dataset = generate_dataset(data)
    init = init_weights(model.m, data.d, model.sigma_0, model.seed)
    test_set = sample_test_learnable(data, config.test_count, config.seed)

    event = check_event_E(dataset, init, model.sigma_0, delta)
    gamma = 0.0 if config.teacher is None else config.teacher.gamma
    regime = check_regime_conditions(
        data,
        model.m,
        model.sigma_0,
        config.eta,
        config.epsilon,
        config.T,
        gamma,
        delta,
    )

    result = train(dataset, init, config, test_set)
    result.extra.update(
        {
            "seeds": {
                "data": data.seed,
                "init": model.seed,
                "test": config.seed,
            },
            "event_E": event,
            "regime": regime,
            "horizons": theoretical_horizons(
                data,
                model.m,
                model.sigma_0,
                config.eta,
                config.epsilon,
                config.c0,
                delta,
            ),
            "test_set": describe_test_set(test_set),
        }
    )
    return result


def describe_test_set(test_set: Sequence[Sample]) -> Dict[str, Any]:
    return {
        "count": len(test_set),
        "positive": int(sum(s.label > 0 for s in test_set)),
    }


def cell_name(p_un: float, method: str, seed: int) -> str:
    """Directory name of a sweep cell, e.g. ``run_0.1_AD-Good_0``."""
    label = re.sub(r"[^A-Za-z0-9.\-]+", "", method)
    return f"run_{p_un:g}_{label}_{seed}"


def cell_configs(
    spec: SweepSpec, p_un: float, method: str, seed: int
) -> Tuple[SyntheticConfig, ModelConfig, TrainConfig]:
    """Resolve the configs of one cell.

    The dataset depends on ``p_un`` and the base data seed only, so every
    method and seed of a row trains on the same samples; the cell seed
    drives the initialization and the test set.
    """
    init_seed, test_seed = derive_seeds(seed, 2)
    data = spec.data.replace(p_un=p_un)
    model = ModelConfig(spec.model.m, spec.model.sigma_0, init_seed)
    config = spec.train.replace(
        teacher=parse_method(method, spec.gamma), seed=test_seed
    )
    return data, model, config


def _run_cell(
    job: Tuple[SweepSpec, float, str, int, Optional[str]]
) -> Tuple[Dict[str, Any], Optional[np.ndarray]]:
    """Run one sweep cell; returns its record and its peak weights."""
    spec, p_un, method, seed, output = job
    data, model, config = cell_configs(spec, p_un, method, seed)
    record: Dict[str, Any] = dict.fromkeys(SWEEP_COLUMNS)
    record.update(p_un=p_un, method=method, seed=seed)

    try:
        result = run_experiment(data, model, config, spec.delta)
    except (DivergenceError, PropertyViolation) as error:
        logger.error(
            "Cell %s failed: %s", cell_name(p_un, method, seed), error
        )
        record["status"] = f"failed: {type(error).__name__}"
        return record, None

    if output is not None:
        directory = pathlib.Path(output) / cell_name(p_un, method, seed)
        directory.mkdir(parents=True, exist_ok=True)
        result.save(directory)

    final_train = result.final_robust_train_acc
    final_test = result.final_robust_test_acc
    record.update(
        status="ok",
        final_robust_train_acc=final_train,
        peak_robust_train_acc=result.peak_robust_train_acc,
        final_robust_test_acc=final_test,
        peak_robust_test_acc=result.peak.robust_test_acc,
        peak_iteration=result.peak.iteration,
        degradation=result.degradation,
        gen_gap=final_train - final_test,
        t0=result.hitting_times.T0,
        t1=result.hitting_times.T1,
    )
    return record, np.array(result.peak.weights.weights)


def _execute(jobs: List[tuple], workers: Optional[int]) -> List[tuple]:
    """Run jobs inline or on a process pool, preserving their order."""
    workers = os.cpu_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_run_cell(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_cell, jobs))


class SweepTable(RunArtifact):
    """One record per sweep cell, in cell order."""

    def __init__(self, records: List[Dict[str, Any]]) -> None:
        self.records = records

    @property
    def failed(self) -> List[Dict[str, Any]]:
        return [r for r in self.records if r["status"] != "ok"]

    def select(self, **criteria: Any) -> List[Dict[str, Any]]:
        return [
            r
            for r in self.records
            if all(r[k] == v for k, v in criteria.items())
        ]

    def to_csv(self, path: PathLike) -> pathlib.Path:
        return write_csv(
            path,
            SWEEP_COLUMNS,
            [[r[c] for c in SWEEP_COLUMNS] for r in self.records],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"columns": list(SWEEP_COLUMNS), "records": self.records}

    def __len__(self) -> int:
        return len(self.records)


def run_dichotomy_sweep(
    spec: SweepSpec, output: Optional[PathLike] = None
) -> SweepTable:
    """Run every (p_un, method, seed) cell of `spec`.

    Parameters
    ----------
    spec : SweepSpec
        The grid and its base configuration.
    output : path-like, optional
        Directory receiving ``sweep.csv`` and one sub-directory per cell.

    Returns
    -------
    SweepTable
        The per-cell records. A diverging cell is marked failed and the
        sweep continues.
    """
    jobs = [
        (spec, p_un, method, seed, None if output is None else str(output))
        for p_un, method, seed in spec.cells
    ]
    logger.info("Sweep over %d cells with %s workers", len(jobs), spec.workers)
    table = SweepTable([record for record, _ in _execute(jobs, spec.workers)])

    if output is not None:
        table.to_csv(pathlib.Path(output) / "sweep.csv")
    if table.failed:
        logger.warning("%d of %d cells failed", len(table.failed), len(table))
    return table


class IdentificationResult(RunArtifact):
    """Estimated learnable and unlearnable subsets.

    Sample ``i`` is estimated learnable when every checkpoint classifies it
    robustly, and unlearnable when none does. The others are unclassified.
    """

    def __init__(self, counts: IntArray, ensemble_size: int) -> None:
        self.counts = np.asarray(counts, dtype=np.int64)
        self.ensemble_size = ensemble_size

    @property
    def learnable(self) -> IntArray:
        return np.flatnonzero(self.counts == self.ensemble_size)

    @property
    def unlearnable(self) -> IntArray:
        return np.flatnonzero(self.counts == 0)

    @property
    def unclassified(self) -> IntArray:
        return np.flatnonzero(
            (self.counts > 0) & (self.counts < self.ensemble_size)
        )

    @property
    def histogram(self) -> IntArray:
        """Number of samples per robust-correct count 0..ensemble_size."""
        return np.bincount(self.counts, minlength=self.ensemble_size + 1)

    def score(self, dataset: Dataset) -> Dict[str, Optional[float]]:
        """Precision and recall of the estimated S_U against ground truth."""
        truth = set(dataset.unlearnable_indices.tolist())
        estimate = set(self.unlearnable.tolist())
        hits = len(truth & estimate)
        return {
            "precision": hits / len(estimate) if estimate else None,
            "recall": hits / len(truth) if truth else None,
            "false_positives": len(estimate - truth),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ensemble_size": self.ensemble_size,
            "learnable": self.learnable,
            "unlearnable": self.unlearnable,
            "unclassified": self.unclassified,
            "histogram": self.histogram,
            "counts": self.counts,
        }


def robustly_correct(
    weights: StudentWeights, dataset: Dataset, attack: AttackConfig
) -> np.ndarray:
    """Whether each training sample keeps a positive margin under PGD."""
    attacked = pgd_attack_batch(
        weights, dataset.patches, dataset.labels, attack
    ).patches
    return dataset.labels * forward(weights, attacked) > 0


def identify_unlearnable_set(
    checkpoints: Sequence[StudentWeights],
    dataset: Dataset,
    attack: AttackConfig,
) -> IdentificationResult:
    """Split the training set by unanimous robust (in)correctness.

    Raises
    ------
    DomainError
        If `checkpoints` is empty.
    """
    if not checkpoints:
        raise DomainError("Identification needs at least one checkpoint")
    if len(checkpoints) == 1:
        logger.warning("Identification from a single checkpoint")

    counts = np.zeros(dataset.N, dtype=np.int64)
    for weights in checkpoints:
        counts += robustly_correct(weights, dataset, attack)

    result = IdentificationResult(counts, len(checkpoints))
    logger.info(
        "Identified |S_L|=%d, |S_U|=%d, %d unclassified",
        result.learnable.size,
        result.unlearnable.size,
        result.unclassified.size,
    )
    return result


def run_identification_ensemble(
    spec: SweepSpec,
    attack: Optional[AttackConfig] = None,
    output: Optional[PathLike] = None,
) -> Tuple[IdentificationResult, Dict[str, Optional[float]]]:
    """Train methods x seeds at the first ``p_un`` and identify subsets.

    Returns the identification and its precision/recall against the
    ground-truth partition.
    """
    attack = spec.train.eval_attack if attack is None else attack
    p_un = spec.p_un_values[0]
    jobs = [
        (spec, p_un, method, seed, None if output is None else str(output))
        for method in spec.methods
        for seed in spec.seeds
    ]
    outcomes = _execute(jobs, spec.workers)
    checkpoints = [
        StudentWeights(weights, spec.model.sigma_0)
        for _, weights in outcomes
        if weights is not None
    ]
    dataset = generate_dataset(spec.data.replace(p_un=p_un))
    result = identify_unlearnable_set(checkpoints, dataset, attack)
    return result, result.score(dataset)


class EntropyStudy(RunArtifact):
    """Teacher entropy on the proxy S_U against distilled robustness."""

    def __init__(
        self,
        margins: Sequence[float],
        entropies: Sequence[Optional[float]],
        accuracies: Sequence[Optional[float]],
        proxy: IntArray,
        reference_peak: int,
    ) -> None:
        self.margins = list(margins)
        self.entropies = list(entropies)
        self.accuracies = list(accuracies)
        self.proxy = np.asarray(proxy, dtype=np.int64)
        self.reference_peak = reference_peak

    @property
    def defined(self) -> bool:
        return self.proxy.size > 0

    @property
    def correlation(self) -> Optional[float]:
        """Spearman correlation of entropy and final robust test accuracy."""
        pairs = [
            (e, a)
            for e, a in zip(self.entropies, self.accuracies)
            if e is not None and a is not None
        ]
        if not self.defined or len(pairs) < 2:
            return None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rho, _ = stats.spearmanr(*zip(*pairs))
        return None if math.isnan(rho) else float(rho)

    @property
    def rows(self) -> List[Tuple[float, Optional[float], Optional[float]]]:
        return list(zip(self.margins, self.entropies, self.accuracies))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "defined": self.defined,
            "proxy_size": int(self.proxy.size),
            "proxy": self.proxy,
            "reference_peak_iteration": self.reference_peak,
            "spearman": self.correlation,
            "rows": [
                {"margin": m, "entropy": e, "final_robust_test_acc": a}
                for m, e, a in self.rows
            ],
        }


def entropy_criterion_study(
    margins: Sequence[float],
    spec: SweepSpec,
    attack: Optional[AttackConfig] = None,
    seed: Optional[int] = None,
) -> EntropyStudy:
    """Relate teacher entropy on a proxy S_U to the distilled student.

    An AT reference run furnishes, at its peak checkpoint, the proxy S_U
    (training samples misclassified under `attack`) and the adversarial
    examples on which each custom-margin teacher is evaluated. For every
    margin an AD student is trained with that teacher.

    Parameters
    ----------
    margins : sequence of float
        Unlearnable-sample margins of the candidate teachers.
    spec : SweepSpec
        Base configuration; its first ``p_un`` value is used.
    attack : AttackConfig, optional
        Attack defining the proxy; PGD-10 at the training budget by default.
    seed : int, optional
        Cell seed; defaults to the first seed of `spec`.
    """
    if not margins:
        raise ConfigurationError("The entropy study needs at least one margin")
    seed = spec.seeds[0] if seed is None else seed
    p_un = spec.p_un_values[0]
    if attack is None:
        attack = AttackConfig(spec.train.epsilon, 10)

    data, model, config = cell_configs(spec, p_un, "AT", seed)
    reference = run_experiment(data, model, config, spec.delta)
    dataset = reference.dataset
    peak = reference.peak.weights

    proxy = np.flatnonzero(~robustly_correct(peak, dataset, attack))
    entropies: List[Optional[float]] = [None] * len(margins)
    if proxy.size:
        subset = dataset.subset(proxy)
        adversarial = pgd_attack_batch(
            peak, subset.patches, subset.labels, attack
        ).patches
        for k, margin in enumerate(margins):
            teacher = TeacherSpec.custom(margin, spec.gamma)
            entropies[k] = float(
                np.mean(
                    [
                        teacher_entropy_adversarial(
                            teacher, sample, adversarial[n]
                        )
                        for n, sample in enumerate(subset)
                    ]
                )
            )
    else:
        logger.warning(
            "The proxy unlearnable set is empty; the entropy criterion is "
            "undefined"
        )

    jobs = [
        (spec, p_un, f"AD-Custom({margin:g})", seed, None)
        for margin in margins
    ]
    accuracies = [
        record["final_robust_test_acc"]
        for record, _ in _execute(jobs, spec.workers)
    ]

    study = EntropyStudy(
        margins, entropies, accuracies, proxy, reference.peak.iteration
    )
    logger.info("Entropy criterion: Spearman %s", study.correlation)
    return study


@dataclass(frozen=True)
class ForgettingReport(RunArtifact):
    """How the robustness of test samples changes from peak to final."""

    kept: int
    forgotten: int
    gained: int
    never: int

    @property
    def total(self) -> int:
        return self.kept + self.forgotten + self.gained + self.never

    def to_dict(self) -> Dict[str, Any]:
        total = self.total
        counts = {
            "kept": self.kept,
            "forgotten": self.forgotten,
            "gained": self.gained,
            "never": self.never,
        }
        return {
            "counts": counts,
            "fractions": {k: v / total for k, v in counts.items()},
        }


def forgetting_analysis(
    peak: StudentWeights,
    final: StudentWeights,
    test_set: Sequence[Sample],
    attack: AttackConfig,
) -> ForgettingReport:
    """Categorize test samples by robustness at the peak and at the end."""
    dataset = Dataset.from_samples(list(test_set))
    at_peak = robustly_correct(peak, dataset, attack)
    at_end = robustly_correct(final, dataset, attack)
    return ForgettingReport(
        kept=int(np.sum(at_peak & at_end)),
        forgotten=int(np.sum(at_peak & ~at_end)),
        gained=int(np.sum(~at_peak & at_end)),
        never=int(np.sum(~at_peak & ~at_end)),
    )
