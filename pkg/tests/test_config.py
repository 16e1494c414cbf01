import logging
import textwrap

import pytest

from adsim.config import ExperimentConfig
from adsim.errors import ConfigurationError
from adsim.model.data import SyntheticConfig
from adsim.model.teacher import TeacherKind


def _write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(textwrap.dedent(text))
    return path


def test_defaults():
    config = ExperimentConfig.defaults()

    assert config.synthetic() == SyntheticConfig()
    assert config.model().m == 80
    assert config.train().T == 4000
    assert config.teacher() is None
    assert config.delta == 0.05
    assert config.output is None


def test_load_fills_defaults(tmp_path):
    path = _write(
        tmp_path,
        """
        data: {d: 30, N: 20, P: 3, p_un: 0.1}
        teacher: {kind: bad, gamma: 8}
        train: {T: 50}
        output: runs/small
        """,
    )
    config = ExperimentConfig.load(path)

    assert config.synthetic() == SyntheticConfig(d=30, N=20, P=3, p_un=0.1)
    assert config.teacher().kind is TeacherKind.BAD
    assert config.train().teacher.gamma == 8.0
    assert config.train().T == 50
    assert config.output == "runs/small"
    assert config.source == str(path)


def test_attack_budget_follows_training(tmp_path):
    config = ExperimentConfig.load(
        _write(tmp_path, "train: {epsilon: 0.3}\nattack: {steps: 4}\n")
    )

    assert config.eval_attack().epsilon == 0.3
    assert config.eval_attack().steps == 4
    assert config.criterion_attack().steps == 10


def test_unknown_key_reports_its_line(tmp_path):
    path = _write(tmp_path, "data:\n  d: 30\n  dims: 4\n")

    with pytest.raises(ConfigurationError, match="line 3.*data.dims"):
        ExperimentConfig.load(path)


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown key 'network'"):
        ExperimentConfig.load(_write(tmp_path, "network: {m: 3}\n"))


@pytest.mark.parametrize(
    "text",
    [
        "data: {d: 3.5}\n",
        "data: {N: true}\n",
        "train: {check_properties: 'yes'}\n",
        "data: {sigma_n: -1}\n",
        "teacher: {kind: oracle}\n",
        "data: 4\n",
        "- 1\n- 2\n",
    ],
)
def test_invalid_values(tmp_path, text):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(_write(tmp_path, text))


def test_invalid_value_names_the_key(tmp_path):
    path = _write(tmp_path, "model:\n  m: many\n")

    with pytest.raises(ConfigurationError, match="line 2.*'model.m'"):
        ExperimentConfig.load(path)


def test_yaml_syntax_error(tmp_path):
    with pytest.raises(ConfigurationError, match="line"):
        ExperimentConfig.load(_write(tmp_path, "data: {d: 30\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(tmp_path / "absent.yaml")


def test_empty_file_means_defaults(tmp_path):
    config = ExperimentConfig.load(_write(tmp_path, ""))

    assert config.synthetic() == SyntheticConfig()


def test_override(caplog):
    with caplog.at_level(logging.WARNING, logger="adsim.config"):
        config = ExperimentConfig.defaults().override("train.T=500")

    assert config.train().T == 500
    assert config.overrides == [
        {"key": "train.T", "value": 500, "previous": 4000}
    ]
    assert "train.T" in caplog.text
    assert config.resolved()["overrides"] == config.overrides


def test_overrides_accumulate():
    config = (
        ExperimentConfig.defaults()
        .override("sweep.methods=[AT, AD-Bad]")
        .override("verbosity=2")
    )

    assert config.sweep().methods == ("AT", "AD-Bad")
    assert config.verbosity == 2
    assert len(config.overrides) == 2


@pytest.mark.parametrize(
    "assignment", ["train.T", "train.steps=3", "colour=red", "data.d=2"]
)
def test_invalid_overrides(assignment):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.defaults().override(assignment)


def test_sweep_spec(tmp_path):
    path = _write(
        tmp_path,
        """
        teacher: {kind: good, gamma: 6}
        sweep: {p_un_values: 0.1, methods: AT, seeds: [3, 4], workers: 2}
        """,
    )
    config = ExperimentConfig.load(path)
    spec = config.sweep()

    assert spec.p_un_values == (0.1,)
    assert spec.methods == ("AT",)
    assert spec.seeds == (3, 4)
    assert spec.workers == 2
    assert spec.gamma == 6.0
    assert spec.train.teacher is None
    assert config.sweep(workers=5).workers == 5


def test_entropy_margins(tmp_path):
    config = ExperimentConfig.load(
        _write(tmp_path, "entropy: {margins: [0, 3]}\n")
    )

    assert config.margins == (0.0, 3.0)
