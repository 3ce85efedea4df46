"""
Parsing of numeric command-line arguments (inline lists, JSON, or JSON files)
"""
import json
from pathlib import Path
from typing import Any, List, Sequence

import numpy as np

from app.schemas.network_schemas import Box
from app.utils.errors import InputError


def _load(value: str) -> Any:
    path = Path(value)
    if path.suffix == ".json" and path.exists():
        return json.loads(path.read_text())
    text = value.strip()
    if text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"cannot parse {value!r} as JSON: {exc.msg}") from exc
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse {value!r} as comma-separated numbers") from exc


def parse_array(value: str, shape: Sequence[int]) -> np.ndarray:
    """Array of the given shape; a flat list of matching size is reshaped row-major"""
    array = np.array(_load(value), dtype=np.float64)
    shape = tuple(shape)
    if array.shape != shape:
        if array.size != int(np.prod(shape)):
            raise InputError(
                f"input {value!r} has shape {array.shape}, expected {shape}",
                expected=list(shape),
                actual=list(array.shape),
            )
        array = array.reshape(shape)
    return array


def parse_inputs(value: str, shape: Sequence[int]) -> List[np.ndarray]:
    """Several inputs: a JSON list (inline or file) or ';'-separated inline inputs"""
    if ";" in value:
        return [parse_array(part, shape) for part in value.split(";") if part.strip()]
    loaded = _load(value)
    if not isinstance(loaded, list) or not loaded:
        raise InputError("--inputs must hold a non-empty list of inputs")
    return [parse_array(json.dumps(item), shape) for item in loaded]


def parse_box(low: str, high: str, dim: int) -> Box:
    """Box bounds; a single number is broadcast to every coordinate"""
    bounds = []
    for value in (low, high):
        array = np.array(_load(value), dtype=np.float64).ravel()
        if array.size == 1:
            array = np.full(dim, array[0])
        if array.size != dim:
            raise InputError(f"box bound {value!r} has {array.size} entries, expected {dim}")
        bounds.append(array)
    return Box(low=bounds[0], high=bounds[1])
