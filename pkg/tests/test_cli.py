import textwrap

import pytest

from adsim.cli import main
from adsim.constants import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_PROPERTY,
    EXIT_USAGE,
    EXIT_VALIDATION,
)
from adsim.io import read_csv, read_json, write_json

CONFIG = """
data: {d: 30, N: 20, P: 3, p_un: 0.1}
model: {m: 8, sigma_0: 0.01}
attack: {steps: 3}
train: {T: 20, log_every: 5, test_count: 5}
sweep: {p_un_values: [0.1], methods: [AT, AD-Good], seeds: [0], workers: 1}
entropy: {margins: [0, 10], steps: 3}
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(textwrap.dedent(CONFIG))
    return str(path)


@pytest.fixture
def trained(tmp_path, config_file):
    output = tmp_path / "run"
    assert main(["train", config_file, "-o", str(output)]) == EXIT_OK
    return output


def test_train(tmp_path, config_file, capsys):
    output = tmp_path / "run"

    assert main(["train", config_file, "-o", str(output)]) == EXIT_OK
    assert "AT run" in capsys.readouterr().out
    metadata = read_json(output / "run.json")
    rows = read_csv(output / "metrics.csv")
    assert metadata["objective"] == "AT"
    assert metadata["config"]["data"]["d"] == 30
    assert metadata["version"]
    assert [int(r["iteration"]) for r in rows] == [5, 10, 15, 20]


def test_overrides_reach_the_run(tmp_path, config_file):
    output = tmp_path / "short"
    code = main(
        [
            "train",
            config_file,
            "-o",
            str(output),
            "--set",
            "train.T=10",
            "--set",
            "teacher.kind=bad",
        ]
    )
    metadata = read_json(output / "run.json")

    assert code == EXIT_OK
    assert metadata["train"]["T"] == 10
    assert metadata["objective"] == "AD-Bad"
    assert [o["key"] for o in metadata["config"]["overrides"]] == [
        "train.T",
        "teacher.kind",
    ]


def test_output_directory_is_not_reused(trained, config_file):
    assert main(["train", config_file, "-o", str(trained)]) == EXIT_VALIDATION
    assert (
        main(["train", config_file, "-o", str(trained), "--overwrite"])
        == EXIT_OK
    )


def test_generate(tmp_path, config_file, capsys):
    output = tmp_path / "data"

    assert main(["generate", config_file, "-o", str(output)]) == EXIT_OK
    summary = read_json(output / "dataset.json")
    assert (output / "dataset.npz").is_file()
    assert summary["N"] == 20
    assert summary["n_unlearnable"] == 2
    assert len(summary["event_E"]["properties"]) == 8
    assert "Concentration event" in capsys.readouterr().out


def test_sweep_and_identify(tmp_path, config_file):
    sweep = tmp_path / "sweep"
    assert main(["sweep", config_file, "-o", str(sweep)]) == EXIT_OK
    assert len(read_csv(sweep / "sweep.csv")) == 2
    assert read_json(sweep / "sweep.json")["table"]["records"]

    runs = sorted(str(p) for p in sweep.glob("run_*"))
    subsets = tmp_path / "subsets"
    code = main(
        ["identify", *runs, "-c", config_file, "-o", str(subsets)]
    )
    content = read_json(subsets / "subsets.json")

    assert code == EXIT_OK
    assert content["identification"]["ensemble_size"] == 2
    assert content["runs"] == runs


def test_identify_rejects_mixed_datasets(tmp_path, config_file, trained):
    other = tmp_path / "other"
    main(["train", config_file, "-o", str(other), "--set", "data.seed=1"])

    code = main(
        [
            "identify",
            str(trained),
            str(other),
            "-c",
            config_file,
            "-o",
            str(tmp_path / "subsets"),
        ]
    )

    assert code == EXIT_VALIDATION


def test_entropy(tmp_path, config_file, capsys):
    output = tmp_path / "entropy"

    assert main(["entropy", config_file, "-o", str(output)]) == EXIT_OK
    rows = read_csv(output / "entropy.csv")
    assert [float(r["margin"]) for r in rows] == [0.0, 10.0]
    assert "Spearman" in capsys.readouterr().out


def test_verify(trained, capsys):
    assert main(["verify", str(trained)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "byte for byte" in out


def test_verify_detects_a_wrong_peak(trained):
    metadata = read_json(trained / "run.json")
    metadata["peak"]["iteration"] = 999
    write_json(trained / "run.json", metadata)

    assert main(["verify", str(trained), "--no-rerun"]) == EXIT_PROPERTY


def test_verify_needs_a_run_directory(tmp_path):
    assert main(["verify", str(tmp_path)]) == EXIT_VALIDATION


def test_divergence_exit_code(tmp_path, config_file):
    code = main(
        [
            "train",
            config_file,
            "-o",
            str(tmp_path / "boom"),
            "--set",
            "train.eta=1.0e30",
            "--set",
            "train.check_properties=false",
        ]
    )

    assert code == EXIT_DIVERGENCE


def test_invalid_configuration_exit_code(tmp_path, config_file):
    code = main(
        ["train", config_file, "-o", str(tmp_path / "x"), "--set", "data.d=2"]
    )

    assert code == EXIT_VALIDATION


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["train", "--bogus"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as error:
        main(argv)

    assert error.value.code == EXIT_USAGE


def test_version(capsys):
    with pytest.raises(SystemExit) as error:
        main(["--version"])

    assert error.value.code == 0
    assert capsys.readouterr().out.startswith("adsim ")
