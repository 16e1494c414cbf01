# coding: utf-8
"""Load experiment configuration files.

A configuration is a YAML mapping with the sections below. Every key is
optional; omitted keys take the desk-scale defaults of
`adsim.constants.DEFAULTS`. Unknown sections or keys are rejected.

.. code-block:: yaml

    data: {d: 100, N: 200, P: 4, alpha: 5.0, sigma_n: 0.4, p_un: 0.1}
    model: {m: 80, sigma_0: 0.01}
    teacher: {kind: good, gamma: 10.0}
    attack: {steps: 20}
    train: {eta: 0.01, epsilon: 0.5, T: 4000}
    sweep: {p_un_values: [0.0, 0.1], methods: [AT, AD-Good], seeds: [0]}
    entropy: {margins: [0, 1, 2, 5, 10], steps: 10}
    instrumentation: {c0: 1.0, c1: 1.0, delta: 0.05}
    output: runs/dichotomy
    verbosity: 1
"""

from __future__ import annotations

import copy
import logging
import pathlib
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import yaml

from adsim.constants import DEFAULTS
from adsim.errors import ConfigurationError
from adsim.experiments import SweepSpec
from adsim.model.adversary import AttackConfig
from adsim.model.data import SyntheticConfig
from adsim.model.network import ModelConfig
from adsim.model.teacher import TeacherSpec
from adsim.training import TrainConfig

logger = logging.getLogger(__name__)


def _optional(cast: Callable[[Any], Any]) -> Callable[[Any], Any]:
    return lambda value: None if value is None else cast(value)


def _boolean(value: Any) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f"{value!r} is not a boolean")
    return value


def _integer(value: Any) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"{value!r} is not an integer")
    return int(value)


def _sequence(cast: Callable[[Any], Any]) -> Callable[[Any], Tuple]:
    def convert(value: Any) -> Tuple:
        if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
            value = [value]
        return tuple(cast(v) for v in value)

    return convert


# section -> key -> (converter, default)
SCHEMA: Dict[str, Dict[str, Tuple[Callable[[Any], Any], Any]]] = {
    "data": {
        "d": (_integer, DEFAULTS["d"]),
        "N": (_integer, DEFAULTS["N"]),
        "P": (_integer, DEFAULTS["P"]),
        "alpha": (float, DEFAULTS["alpha"]),
        "sigma_n": (float, DEFAULTS["sigma_n"]),
        "p_un": (float, DEFAULTS["p_un"]),
        "seed": (_integer, 0),
        "random_labels": (str, "none"),
    },
    "model": {
        "m": (_integer, DEFAULTS["m"]),
        "sigma_0": (float, DEFAULTS["sigma_0"]),
        "seed": (_integer, 0),
    },
    "teacher": {
        "kind": (str, "none"),
        "gamma": (float, DEFAULTS["gamma"]),
        "custom_unlearnable_margin": (float, 0.0),
    },
    "attack": {
        "epsilon": (_optional(float), None),
        "steps": (_integer, DEFAULTS["pgd_steps"]),
        "step_size": (_optional(float), None),
    },
    "train": {
        "eta": (float, DEFAULTS["eta"]),
        "epsilon": (float, DEFAULTS["epsilon"]),
        "T": (_integer, DEFAULTS["T"]),
        "log_every": (_integer, DEFAULTS["log_every"]),
        "test_count": (_integer, DEFAULTS["test_count"]),
        "seed": (_integer, 0),
        "check_properties": (_boolean, True),
        "record_margins": (_boolean, False),
    },
    "sweep": {
        "p_un_values": (_sequence(float), (0.0, 0.05, 0.1, 0.2)),
        "methods": (_sequence(str), ("AT", "AD-Good", "AD-Bad")),
        "seeds": (_sequence(_integer), (0, 1, 2)),
        "workers": (_optional(_integer), None),
    },
    "entropy": {
        "margins": (_sequence(float), (0.0, 1.0, 2.0, 5.0, 10.0)),
        "steps": (_integer, DEFAULTS["criterion_steps"]),
    },
    "instrumentation": {
        "c0": (float, DEFAULTS["c0"]),
        "c1": (float, DEFAULTS["c1"]),
        "delta": (float, DEFAULTS["delta"]),
        "noise_multiple": (float, DEFAULTS["noise_multiple"]),
    },
}

TOP_LEVEL: Dict[str, Tuple[Callable[[Any], Any], Any]] = {
    "output": (_optional(str), None),
    "verbosity": (_integer, 0),
}


def _key_lines(text: str) -> Dict[str, int]:
    """Map every dotted key of a YAML document to its 1-based line."""
    lines: Dict[str, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, value in root.value:
        lines[key.value] = key.start_mark.line + 1
        if isinstance(value, yaml.MappingNode):
            for subkey, _ in value.value:
                lines[f"{key.value}.{subkey.value}"] = (
                    subkey.start_mark.line + 1
                )
    return lines


def _where(source: str, lines: Dict[str, int], key: str) -> str:
    line = lines.get(key)
    return f"{source}, line {line}" if line else source


class ExperimentConfig:
    """A validated, fully-resolved experiment configuration.

    `values` holds every section with defaults filled in. `overrides`
    records the command-line changes applied after loading, with their
    previous values.
    """

    def __init__(
        self,
        values: Dict[str, Any],
        source: str = "<defaults>",
        overrides: Optional[List[Dict[str, Any]]] = None,
    ) -> None:
        self.values = values
        self.source = source
        self.overrides = overrides or []

    @classmethod
    def defaults(cls) -> ExperimentConfig:
        return cls.from_dict({})

    @classmethod
    def from_dict(
        cls,
        content: Any,
        source: str = "<dict>",
        lines: Optional[Dict[str, int]] = None,
    ) -> ExperimentConfig:
        """Validate a raw mapping against the schema."""
        lines = lines or {}
        if content is None:
            content = {}
        if not isinstance(content, dict):
            raise ConfigurationError(
                f"{source}: the configuration must be a mapping"
            )

        values: Dict[str, Any] = {}
        for section, keys in SCHEMA.items():
            raw = content.get(section) or {}
            if not isinstance(raw, dict):
                raise ConfigurationError(
                    f"{_where(source, lines, section)}: section '{section}' "
                    "must be a mapping"
                )
            values[section] = {}
            for key, (cast, default) in keys.items():
                dotted = f"{section}.{key}"
                values[section][key] = _convert(
                    cast, raw.get(key, default), dotted, source, lines
                )
            for key in raw:
                if key not in keys:
                    dotted = f"{section}.{key}"
                    raise ConfigurationError(
                        f"{_where(source, lines, dotted)}: unknown key "
                        f"'{dotted}'"
                    )

        for key, (cast, default) in TOP_LEVEL.items():
            values[key] = _convert(
                cast, content.get(key, default), key, source, lines
            )
        for key in content:
            if key not in SCHEMA and key not in TOP_LEVEL:
                raise ConfigurationError(
                    f"{_where(source, lines, str(key))}: unknown key '{key}'"
                )

        config = cls(values, source)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Union[str, pathlib.Path]) -> ExperimentConfig:
        """Read and validate a YAML configuration file."""
        path = pathlib.Path(path)
        try:
            text = path.read_text()
        except OSError as error:
            raise ConfigurationError(f"Cannot read {path}: {error}") from None
        try:
            content = yaml.safe_load(text)
        except yaml.YAMLError as error:
            mark = getattr(error, "problem_mark", None)
            where = (
                f"{path}, line {mark.line + 1}, column {mark.column + 1}"
                if mark is not None
                else str(path)
            )
            problem = getattr(error, "problem", None) or str(error)
            raise ConfigurationError(f"{where}: {problem}") from None
        return cls.from_dict(content, str(path), _key_lines(text))

    def override(self, assignment: str) -> ExperimentConfig:
        """Apply a ``section.key=value`` assignment; the value is YAML."""
        dotted, sep, text = assignment.partition("=")
        if not sep:
            raise ConfigurationError(
                f"Override {assignment!r} is not of the form section.key=value"
            )
        dotted = dotted.strip()
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError:
            value = text

        content = copy.deepcopy(self.values)
        section, _, key = dotted.partition(".")
        if key:
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigurationError(f"Unknown key '{dotted}'")
            previous = content[section][key]
            content[section][key] = value
        else:
            if section not in TOP_LEVEL:
                raise ConfigurationError(f"Unknown key '{dotted}'")
            previous = content[section]
            content[section] = value

        logger.warning(
            "Override %s: %r -> %r (was set from %s)",
            dotted,
            previous,
            value,
            self.source,
        )
        config = ExperimentConfig.from_dict(content, self.source)
        config.overrides = self.overrides + [
            {"key": dotted, "value": value, "previous": previous}
        ]
        return config

    def validate(self) -> None:
        """Build every domain config once so invalid values fail early."""
        self.synthetic()
        self.model()
        self.train()
        self.sweep()

    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(**self.values["data"])

    def model(self) -> ModelConfig:
        return ModelConfig(**self.values["model"])

    def teacher(self) -> Optional[TeacherSpec]:
        section = self.values["teacher"]
        if section["kind"] == "none":
            return None
        return TeacherSpec(
            section["kind"],
            section["gamma"],
            section["custom_unlearnable_margin"],
        )

    def eval_attack(self) -> AttackConfig:
        section = self.values["attack"]
        epsilon = section["epsilon"]
        return AttackConfig(
            self.values["train"]["epsilon"] if epsilon is None else epsilon,
            section["steps"],
            section["step_size"],
        )

    def criterion_attack(self) -> AttackConfig:
        """PGD used by the entropy criterion at the training budget."""
        return AttackConfig(
            self.values["train"]["epsilon"], self.values["entropy"]["steps"]
        )

    def train(self) -> TrainConfig:
        instrumentation = self.values["instrumentation"]
        return TrainConfig(
            **self.values["train"],
            teacher=self.teacher(),
            eval_attack=self.eval_attack(),
            c0=instrumentation["c0"],
            c1=instrumentation["c1"],
            noise_multiple=instrumentation["noise_multiple"],
        )

    def sweep(self, workers: Optional[int] = None) -> SweepSpec:
        section = self.values["sweep"]
        return SweepSpec(
            data=self.synthetic(),
            model=self.model(),
            train=self.train().replace(teacher=None),
            p_un_values=section["p_un_values"],
            methods=section["methods"],
            seeds=section["seeds"],
            workers=section["workers"] if workers is None else workers,
            delta=self.delta,
            gamma=self.values["teacher"]["gamma"],
        )

    @property
    def delta(self) -> float:
        return self.values["instrumentation"]["delta"]

    @property
    def margins(self) -> Tuple[float, ...]:
        return self.values["entropy"]["margins"]

    @property
    def output(self) -> Optional[str]:
        return self.values["output"]

    @property
    def verbosity(self) -> int:
        return self.values["verbosity"]

    def resolved(self) -> Dict[str, Any]:
        """Every value, defaults included, plus the applied overrides."""
        return {**copy.deepcopy(self.values), "overrides": self.overrides}


def _convert(
    cast: Callable[[Any], Any],
    value: Any,
    dotted: str,
    source: str,
    lines: Dict[str, int],
) -> Any:
    try:
        return cast(value)
    except (TypeError, ValueError) as error:
        raise ConfigurationError(
            f"{_where(source, lines, dotted)}: invalid value {value!r} for "
            f"'{dotted}' ({error})"
        ) from None
