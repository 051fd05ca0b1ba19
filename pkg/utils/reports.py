# utils/reports.py

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from utils.errors import ExportError

logger = logging.getLogger(__name__)

SCHEMA_PREFIX = 'iets'
SCHEMA_VERSION = 1


def schema_tag(kind: str) -> str:
    return f"{SCHEMA_PREFIX}.{kind}/{SCHEMA_VERSION}"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types only: numpy scalars/arrays unwrapped, NaN/inf -> null, enums -> value"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return to_jsonable(value.value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps_report(payload: Dict[str, Any], kind: str) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline"""
    document = dict(to_jsonable(payload))
    document['schema'] = schema_tag(kind)
    return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_json_report(payload: Dict[str, Any], path: Union[str, Path], kind: str) -> Path:
    """
    Write a report document.

    Args:
        payload: report fields (numpy values allowed)
        path: output file
        kind: report kind, becomes the schema tag 'iets.<kind>/1'

    Returns:
        The written path
    """
    path = Path(path)
    text = dumps_report(payload, kind)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise ExportError(f"Could not write report ({e.strerror or e})", path=str(path)) from e
    logger.info(f"📊 Report written to {path}")
    return path


def read_json_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
