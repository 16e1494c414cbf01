# coding: utf-8
"""Define type hints for being used accross the package."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any, Dict, Union

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]

# Anything that can be read as a real number or an array of them.
Real = Union[float, np.floating, FloatArray]


class RunArtifact(ABC):
    """Base class for objects exported into a run's metadata."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Output the current element as a JSON-compatible dictionary."""
        ...
