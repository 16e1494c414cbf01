import hashlib
import json
import pathlib

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import adsim
from adsim.errors import ConfigurationError, ShapeError
from adsim.io import (
    csv_value,
    load_dataset,
    load_weights,
    prepare_directory,
    read_csv,
    read_json,
    render,
    save_arrays,
    save_dataset,
    save_weights,
    to_jsonable,
    write_csv,
    write_json,
)
from adsim.model.teacher import TeacherSpec


def _digest(path):
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


def test_dataset_file(tmp_path, desk_dataset):
    save_dataset(tmp_path / "dataset.npz", desk_dataset)
    loaded = load_dataset(tmp_path / "dataset.npz")

    assert loaded.fingerprint() == desk_dataset.fingerprint()
    assert loaded.config == desk_dataset.config


def test_weights_file(tmp_path, desk_init):
    save_weights(tmp_path / "w.npz", desk_init)

    assert load_weights(tmp_path / "w.npz") == desk_init


def test_npz_files_are_byte_reproducible(tmp_path, desk_init):
    save_weights(tmp_path / "a.npz", desk_init)
    save_weights(tmp_path / "b.npz", desk_init)

    assert _digest(tmp_path / "a.npz") == _digest(tmp_path / "b.npz")


def test_foreign_npz_is_rejected(tmp_path):
    save_arrays(tmp_path / "other.npz", values=np.arange(3))

    with pytest.raises(ConfigurationError):
        load_weights(tmp_path / "other.npz")
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path / "other.npz")


def test_jsonable_translation():
    content = to_jsonable(
        {
            "array": np.arange(3),
            "scalar": np.float64(0.5),
            "flag": np.bool_(True),
            "count": np.int64(4),
            "path": pathlib.Path("runs/x"),
            "teacher": TeacherSpec.good(3.0),
            1: (None, 2.0),
        }
    )

    assert content == {
        "array": [0, 1, 2],
        "scalar": 0.5,
        "flag": True,
        "count": 4,
        "path": "runs/x",
        "teacher": {
            "kind": "good",
            "gamma": 3.0,
            "custom_unlearnable_margin": 0.0,
            "unlearnable_margin": 0.0,
        },
        "1": [None, 2.0],
    }


def test_jsonable_rejects_unknown_types():
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_json_file(tmp_path):
    path = write_json(tmp_path / "x.json", {"b": 1, "a": np.array([0.25])})

    assert read_json(path) == {"b": 1, "a": [0.25]}
    assert list(json.loads(path.read_text())) == ["b", "a"]


def test_csv_cells():
    assert csv_value(None) == ""
    assert csv_value(True) == "true"
    assert csv_value(0.1) == "0.1"
    assert csv_value(1 / 3) == repr(1 / 3)
    assert csv_value(["T0", "T1"]) == "T0;T1"
    assert csv_value(7) == "7"


def test_csv_file(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"), [(1, None), (2, 0.5)])

    assert path.read_text() == "a,b\n1,\n2,0.5\n"
    assert read_csv(path) == [{"a": "1", "b": ""}, {"a": "2", "b": "0.5"}]


def test_csv_row_length(tmp_path):
    with pytest.raises(ShapeError):
        write_csv(tmp_path / "x.csv", ("a", "b"), [(1,)])


def test_prepare_directory(tmp_path):
    target = prepare_directory(tmp_path / "out" / "run")
    (target / "file").write_text("x")

    with pytest.raises(ConfigurationError, match="--overwrite"):
        prepare_directory(target)
    assert prepare_directory(target, overwrite=True) == target


def test_render_has_the_version():
    assert render("v{{ version }} {{ x }}", x=3) == f"v{adsim.__version__} 3"


def test_array_order_is_kept(tmp_path):
    path = save_arrays(tmp_path / "x.npz", b=np.ones(2), a=np.zeros(1))

    with np.load(path) as content:
        assert content.files == ["b", "a"]
        assert_array_equal(content["b"], [1.0, 1.0])
