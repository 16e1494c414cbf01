# coding: utf-8
"""Input--Output functionalities."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import pathlib
import zipfile
from enum import Enum
from typing import Any, Callable, Dict, Iterable, Sequence, Union

import numpy as np
from jinja2 import Template

import adsim
from adsim.errors import ConfigurationError, ShapeError
from adsim.model.data import Dataset, SyntheticConfig
from adsim.model.network import StudentWeights
from adsim.typing import RunArtifact

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]

# A fixed timestamp makes the zip container, hence the file hash, depend
# on the array contents only.
_NPZ_DATE_TIME = (1980, 1, 1, 0, 0, 0)


def sequence2json(value: Sequence[Any]) -> list:
    return [to_jsonable(v) for v in value]


def mapping2json(value: Dict[Any, Any]) -> dict:
    return {str(k): to_jsonable(v) for k, v in value.items()}


def numpy2json(value: np.ndarray) -> Any:
    return sequence2json(value.tolist()) if value.ndim else value.item()


def artifact2json(value: RunArtifact) -> dict:
    """Call the to_dict method of the artifact."""
    return mapping2json(value.to_dict())


def to_jsonable(element: Any) -> Any:
    """Translate adsim objects into JSON-compatible Python values."""

    translate_types: Dict[type, Callable[[Any], Any]] = {
        type(None): lambda v: None,
        bool: bool,
        str: str,
        int: int,
        float: float,
        list: sequence2json,
        tuple: sequence2json,
        dict: mapping2json,
        np.ndarray: numpy2json,
        np.bool_: bool,
        pathlib.PosixPath: str,
        pathlib.WindowsPath: str,
    }

    if (element_type := type(element)) in translate_types:
        return translate_types[element_type](element)

    # Subclasses: enums before str/int, numpy scalars, artifacts, configs.
    if isinstance(element, Enum):
        return element.value
    if isinstance(element, np.integer):
        return int(element)
    if isinstance(element, np.floating):
        return float(element)
    if isinstance(element, RunArtifact):
        return artifact2json(element)
    if isinstance(element, dict):
        return mapping2json(element)
    if dataclasses.is_dataclass(element) and not isinstance(element, type):
        if hasattr(element, "to_dict"):
            return mapping2json(element.to_dict())
        return mapping2json(dataclasses.asdict(element))

    raise TypeError(f"Could not serialize {element} of type {element_type}")


def csv_value(value: Any) -> str:
    """Format one CSV cell; floats use their shortest round-trip repr."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ";".join(csv_value(v) for v in value)
    return str(value)


def write_json(path: PathLike, content: Any) -> pathlib.Path:
    """Write `content` as indented JSON, preserving key order."""
    path = pathlib.Path(path)
    with path.open("w") as f:
        json.dump(to_jsonable(content), f, indent=2)
        f.write("\n")
    logger.debug("Wrote %s", path)
    return path


def read_json(path: PathLike) -> Any:
    with pathlib.Path(path).open() as f:
        return json.load(f)


def write_csv(
    path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]
) -> pathlib.Path:
    """Write a CSV with the given header, one row per sequence."""
    path = pathlib.Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ShapeError(
                    f"Row of length {len(row)} does not match the "
                    f"{len(columns)} columns of {path.name}"
                )
            writer.writerow([csv_value(v) for v in row])
    logger.debug("Wrote %s", path)
    return path


def read_csv(path: PathLike) -> list:
    """Read a CSV written by `write_csv` as a list of dicts of strings."""
    with pathlib.Path(path).open(newline="") as f:
        return list(csv.DictReader(f))


def save_arrays(path: PathLike, **arrays: Any) -> pathlib.Path:
    """Write arrays into a byte-reproducible ``.npz`` container.

    Entries are stored uncompressed, in keyword order, with a fixed
    timestamp; ``numpy.load`` reads the file back.
    """
    path = pathlib.Path(path)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, value in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_NPZ_DATE_TIME)
            info.compress_type = zipfile.ZIP_STORED
            with zf.open(info, "w") as f:
                np.lib.format.write_array(
                    f, np.asanyarray(value), allow_pickle=False
                )
    logger.debug("Wrote %s", path)
    return path


def load_arrays(path: PathLike) -> Dict[str, np.ndarray]:
    with np.load(pathlib.Path(path), allow_pickle=False) as content:
        return {name: content[name] for name in content.files}


def save_dataset(path: PathLike, dataset: Dataset) -> pathlib.Path:
    config = "" if dataset.config is None else json.dumps(
        dataset.config.to_dict()
    )
    return save_arrays(
        path,
        patches=dataset.patches,
        labels=dataset.labels,
        signal_index=dataset.signal_index,
        learnable=dataset.learnable,
        config=np.array(config),
    )


def load_dataset(path: PathLike) -> Dataset:
    arrays = load_arrays(path)
    try:
        config = str(arrays["config"])
        return Dataset(
            arrays["patches"],
            arrays["labels"],
            arrays["signal_index"],
            arrays["learnable"],
            config=SyntheticConfig(**json.loads(config)) if config else None,
        )
    except KeyError as error:
        raise ConfigurationError(
            f"{path} is not a dataset file: missing {error}"
        ) from None


def save_weights(path: PathLike, weights: StudentWeights) -> pathlib.Path:
    return save_arrays(
        path, weights=weights.weights, sigma_0=np.array(weights.sigma_0)
    )


def load_weights(path: PathLike) -> StudentWeights:
    arrays = load_arrays(path)
    try:
        return StudentWeights(arrays["weights"], float(arrays["sigma_0"]))
    except KeyError as error:
        raise ConfigurationError(
            f"{path} is not a weights file: missing {error}"
        ) from None


def prepare_directory(path: PathLike, overwrite: bool = False) -> pathlib.Path:
    """Create an output directory, refusing to reuse a non-empty one."""
    path = pathlib.Path(path)
    if path.exists() and any(path.iterdir()) and not overwrite:
        raise ConfigurationError(
            f"Output directory {path} is not empty; pass --overwrite to "
            "replace its contents"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path


def render(template: str, **context: Any) -> str:
    """Render a Jinja2 template with the tool version in scope."""
    return Template(template).render(version=adsim.__version__, **context)
