# coding: utf-8
"""Command-line interface.

.. code-block:: console

    $ adsim generate config.yaml -o data/
    $ adsim train config.yaml -o runs/at --set train.T=500
    $ adsim sweep config.yaml -o runs/sweep --workers 8
    $ adsim identify runs/sweep/run_0.1_* --config config.yaml -o subsets/
    $ adsim entropy config.yaml -o runs/entropy
    $ adsim verify runs/at

Every command writes machine-readable files carrying the tool version and
the fully-resolved configuration, and prints a one-screen summary.
"""

from __future__ import annotations

import argparse
import filecmp
import logging
import pathlib
import re
import sys
import tempfile
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import adsim
from adsim import template
from adsim.config import ExperimentConfig
from adsim.constants import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_PROPERTY,
    EXIT_USAGE,
    EXIT_VALIDATION,
)
from adsim.errors import (
    BudgetError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    PropertyViolation,
    ShapeError,
)
from adsim.experiments import (
    entropy_criterion_study,
    identify_unlearnable_set,
    run_dichotomy_sweep,
    run_experiment,
    run_identification_ensemble,
)
from adsim.instrumentation import NoiseCoefficients
from adsim.io import (
    load_dataset,
    load_weights,
    prepare_directory,
    read_csv,
    read_json,
    render,
    save_dataset,
    write_csv,
    write_json,
)
from adsim.model.data import SyntheticConfig, generate_dataset
from adsim.model.events import check_event_E, check_regime_conditions
from adsim.model.network import ModelConfig, init_weights
from adsim.training import TrainConfig

logger = logging.getLogger(__name__)

Check = Tuple[str, bool, str]

_ACCURACY_COLUMNS = (
    "robust_train_acc",
    "robust_train_acc_learnable",
    "robust_train_acc_unlearnable",
    "robust_test_acc",
    "clean_test_acc",
)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with `EXIT_USAGE`."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log_level(verbosity: int) -> int:
    if verbosity <= 0:
        return logging.WARNING
    return logging.INFO if verbosity == 1 else logging.DEBUG


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Read the config file (or the defaults) and apply ``--set`` items."""
    path = getattr(args, "config", None)
    config = (
        ExperimentConfig.defaults()
        if path is None
        else ExperimentConfig.load(path)
    )
    for assignment in args.set or []:
        config = config.override(assignment)
    if config.verbosity > args.verbose:
        logging.getLogger().setLevel(_log_level(config.verbosity))
    return config


def _output(
    args: argparse.Namespace, config: ExperimentConfig, default: str
) -> pathlib.Path:
    path = args.output or config.output or default
    return prepare_directory(path, args.overwrite)


def _header(config: ExperimentConfig) -> Dict[str, Any]:
    return {"version": adsim.__version__, "config": config.resolved()}


def cmd_generate(args: argparse.Namespace) -> int:
    """Write the training set and its concentration-event report."""
    config = _load_config(args)
    directory = _output(args, config, "dataset")
    data, model = config.synthetic(), config.model()
    train = config.train()

    dataset = generate_dataset(data)
    init = init_weights(model.m, data.d, model.sigma_0, model.seed)
    report = check_event_E(dataset, init, model.sigma_0, config.delta)
    teacher = train.teacher
    regime = check_regime_conditions(
        data,
        model.m,
        model.sigma_0,
        train.eta,
        train.epsilon,
        train.T,
        0.0 if teacher is None else teacher.gamma,
        config.delta,
    )

    save_dataset(directory / "dataset.npz", dataset)
    write_json(
        directory / "dataset.json",
        {
            **_header(config),
            "fingerprint": dataset.fingerprint(),
            "N": dataset.N,
            "n_unlearnable": int(dataset.unlearnable_indices.size),
            "event_E": report,
            "regime": regime,
        },
    )
    print(
        render(
            template.EVENT_E_TEMPLATE,
            dataset=dataset,
            report=report,
            regime=regime,
        )
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train one student and write its run directory."""
    config = _load_config(args)
    directory = _output(args, config, "run")
    result = run_experiment(
        config.synthetic(), config.model(), config.train(), config.delta
    )
    result.extra["config"] = config.resolved()
    result.save(directory)
    print(
        render(
            template.RUN_SUMMARY_TEMPLATE, result=result, directory=directory
        )
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run the (p_un, method, seed) grid."""
    config = _load_config(args)
    directory = _output(args, config, "sweep")
    table = run_dichotomy_sweep(config.sweep(args.workers), directory)
    write_json(directory / "sweep.json", {**_header(config), "table": table})
    print(render(template.SWEEP_TEMPLATE, table=table))
    return EXIT_OK


def _load_checkpoints(runs: Sequence[str]) -> tuple:
    """Read the peak weights of run directories sharing one dataset."""
    dataset = load_dataset(pathlib.Path(runs[0]) / "dataset.npz")
    fingerprint = dataset.fingerprint()
    checkpoints = []
    for run in map(pathlib.Path, runs):
        metadata = read_json(run / "run.json")
        if metadata["dataset_fingerprint"] != fingerprint:
            raise ConfigurationError(
                f"{run} was trained on a different dataset than {runs[0]}"
            )
        checkpoints.append(load_weights(run / "weights_peak.npz"))
    return dataset, checkpoints


def cmd_identify(args: argparse.Namespace) -> int:
    """Estimate S_L and S_U from peak checkpoints.

    With run directories, their peak weights form the ensemble; without,
    the ensemble is trained from the configuration first.
    """
    config = _load_config(args)
    directory = _output(args, config, "identify")
    attack = config.eval_attack()

    if args.runs:
        dataset, checkpoints = _load_checkpoints(args.runs)
        result = identify_unlearnable_set(checkpoints, dataset, attack)
        score = result.score(dataset)
    else:
        result, score = run_identification_ensemble(
            config.sweep(args.workers), attack, directory
        )

    write_json(
        directory / "subsets.json",
        {
            **_header(config),
            "runs": list(args.runs),
            "attack": attack,
            "identification": result,
            "score": score,
        },
    )
    print(render(template.IDENTIFY_TEMPLATE, result=result, score=score))
    return EXIT_OK


def cmd_entropy(args: argparse.Namespace) -> int:
    """Correlate teacher entropy on the proxy S_U with distilled robustness."""
    config = _load_config(args)
    directory = _output(args, config, "entropy")
    study = entropy_criterion_study(
        config.margins, config.sweep(args.workers), config.criterion_attack()
    )
    write_csv(
        directory / "entropy.csv",
        ("margin", "entropy", "final_robust_test_acc"),
        study.rows,
    )
    write_json(directory / "entropy.json", {**_header(config), "study": study})
    print(render(template.ENTROPY_TEMPLATE, study=study))
    return EXIT_OK


def _snapshot_iterations(directory: pathlib.Path) -> List[int]:
    return sorted(
        int(match[1])
        for path in directory.glob("rho_*.npz")
        if (match := re.fullmatch(r"rho_(\d+)\.npz", path.name))
    )


def _check_orthogonality(directory: pathlib.Path) -> Check:
    offending = [
        path.name
        for path in sorted(directory.glob("weights_*.npz"))
        if not load_weights(path).is_orthogonal
    ]
    return (
        "weights orthogonal to the unlearnable feature",
        not offending,
        ", ".join(offending),
    )


def _check_rho_monotone(
    directory: pathlib.Path, objective: str
) -> Optional[Check]:
    if objective != "AT":
        return None
    iterations = _snapshot_iterations(directory)
    previous = None
    for t in iterations:
        rho = NoiseCoefficients.load(directory / f"rho_{t}.npz").rho
        if previous is not None and np.any(rho < previous[1]):
            return (
                "noise coefficients non-decreasing",
                False,
                f"decrease between iterations {previous[0]} and {t}",
            )
        previous = (t, rho)
    return (
        "noise coefficients non-decreasing",
        True,
        f"{len(iterations)} snapshots",
    )


def _check_peak(metadata: Dict[str, Any], rows: List[dict]) -> Check:
    accuracies = [float(row["robust_test_acc"]) for row in rows]
    best = max(accuracies)
    iteration = int(rows[accuracies.index(best)]["iteration"])
    peak = metadata["peak"]
    ok = peak["iteration"] == iteration and peak["robust_test_acc"] == best
    return (
        "peak checkpoint matches the metrics",
        ok,
        f"recorded {peak['iteration']}, metrics {iteration}",
    )


def _check_accuracies(rows: List[dict]) -> Check:
    values = [
        float(row[column])
        for row in rows
        for column in _ACCURACY_COLUMNS
        if row[column] != ""
    ]
    ok = all(0.0 <= v <= 1.0 for v in values)
    return ("accuracies within [0, 1]", ok, "")


def _rerun(directory: pathlib.Path, metadata: Dict[str, Any]) -> Check:
    """Train again from the recorded configuration and compare CSV bytes."""
    seeds = metadata["seeds"]
    data = SyntheticConfig(**metadata["data"])
    model = ModelConfig(
        metadata["model"]["m"], metadata["model"]["sigma_0"], seeds["init"]
    )
    config = TrainConfig.from_dict(metadata["train"])
    result = run_experiment(data, model, config, metadata["event_E"]["delta"])
    with tempfile.TemporaryDirectory() as scratch:
        path = pathlib.Path(scratch) / "metrics.csv"
        result.log.to_csv(path)
        same = filecmp.cmp(path, directory / "metrics.csv", shallow=False)
    return ("re-run reproduces metrics.csv byte for byte", same, "")


def cmd_verify(args: argparse.Namespace) -> int:
    """Re-check the properties of a saved run directory."""
    directory = pathlib.Path(args.run)
    if not (directory / "run.json").is_file():
        raise ConfigurationError(f"{directory} is not a run directory")
    metadata = read_json(directory / "run.json")
    rows = read_csv(directory / "metrics.csv")
    if not rows:
        raise ConfigurationError(f"{directory}/metrics.csv has no rows")

    checks: List[Optional[Check]] = [
        _check_orthogonality(directory),
        _check_rho_monotone(directory, metadata["objective"]),
        _check_peak(metadata, rows),
        _check_accuracies(rows),
    ]
    if args.no_rerun:
        logger.info("Skipping the determinism re-run")
    else:
        checks.append(_rerun(directory, metadata))

    checks = [c for c in checks if c is not None]
    print(render(template.VERIFY_TEMPLATE, directory=directory, checks=checks))
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_PROPERTY


def _add_common(parser: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        parser.add_argument(
            "config", nargs="?", help="YAML configuration file"
        )
    parser.add_argument("-o", "--output", help="output directory")
    parser.add_argument(
        "--overwrite",
        action="store_true",
        help="write into a non-empty output directory",
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override a configuration value (repeatable)",
    )


def _add_workers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="parallel runs (default: sweep.workers, else every core)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="adsim",
        description="Feature-learning dynamics of adversarial training and "
        "adversarial distillation on synthetic patch data.",
    )
    parser.add_argument(
        "--version", action="version", version=f"adsim {adsim.__version__}"
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="increase the logging verbosity (repeatable)",
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    commands_table: List[Tuple[str, Callable, str]] = [
        ("generate", cmd_generate, "write a dataset and its event report"),
        ("train", cmd_train, "train one student"),
        ("sweep", cmd_sweep, "run the dichotomy sweep"),
        ("entropy", cmd_entropy, "run the entropy-criterion study"),
    ]
    for name, func, help_ in commands_table:
        sub = commands.add_parser(name, help=help_)
        _add_common(sub)
        if name in ("sweep", "entropy"):
            _add_workers(sub)
        sub.set_defaults(func=func)

    identify = commands.add_parser(
        "identify", help="estimate the learnable and unlearnable subsets"
    )
    identify.add_argument(
        "runs",
        nargs="*",
        help="run directories trained on one dataset; when omitted the "
        "ensemble is trained from the configuration",
    )
    identify.add_argument("-c", "--config", help="YAML configuration file")
    _add_common(identify, config=False)
    _add_workers(identify)
    identify.set_defaults(func=cmd_identify)

    verify = commands.add_parser(
        "verify", help="re-check the properties of a run directory"
    )
    verify.add_argument("run", help="run directory written by `adsim train`")
    verify.add_argument(
        "--no-rerun",
        action="store_true",
        help="skip the determinism re-run",
    )
    verify.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse `argv`, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=_log_level(args.verbose),
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except (ConfigurationError, ShapeError, DomainError) as error:
        logger.error("%s", error)
        return EXIT_VALIDATION
    except DivergenceError as error:
        logger.error("%s", error)
        return EXIT_DIVERGENCE
    except (PropertyViolation, BudgetError) as error:
        logger.error("%s", error)
        return EXIT_PROPERTY
