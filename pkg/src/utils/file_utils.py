"""
File and JSON helpers: reading and writing documents, and the JSON
encoding of complex numbers and exact integer arrays.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from ..core.errors import ConfigInvalid

logger = logging.getLogger(__name__)

JsonComplex = Union[float, List[float], str]


def complex_to_json(z: complex) -> JsonComplex:
    """Real numbers as plain floats, others as [re, im], infinity as "inf"."""
    if isinstance(z, float) and math.isinf(z):
        return "inf"
    z = complex(z)
    if math.isinf(z.real) or math.isinf(z.imag):
        return "inf"
    if z.imag == 0:
        return z.real
    return [z.real, z.imag]


def complex_from_json(value: JsonComplex) -> complex:
    """Inverse of complex_to_json (infinity decodes to math.inf)."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            return complex(value.replace(" ", "").replace("i", "j"))
        except ValueError as e:
            raise ConfigInvalid(f"not a complex number: {value!r}") from e
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigInvalid(f"complex numbers are [re, im] pairs, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(f"not a complex number: {value!r}")
    return complex(float(value), 0.0)


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy / complex / Fraction values for json.dump."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return complex_to_json(complex(value))
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return f"{value.numerator}/{value.denominator}"
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    try:
        return complex_to_json(complex(value))
    except (TypeError, ValueError):
        return str(value)


def read_json(path: Path) -> Dict[str, Any]:
    """
    Read a JSON document.

    Raises:
        ConfigInvalid: the file is missing or is not valid JSON.
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigInvalid(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"invalid JSON in {path}: {e}") from e


def write_json(path: Path, data: Any) -> Path:
    """Write a JSON document, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, ensure_ascii=False)
    logger.debug(f"Wrote {path}")
    return path


def write_text(path: Path, text: str) -> Path:
    """Write a text file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    logger.debug(f"Wrote {path}")
    return path
