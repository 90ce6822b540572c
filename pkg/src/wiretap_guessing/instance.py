"""Loading source/distortion instances from JSON.

Schema::

    {
      "source": [0.5, 0.3, 0.2],            # probabilities, summing to 1
      "distortion": [[0, 1, 1], ...]        # |X| rows, or the string "hamming"
      "labels": ["a", "b", "c"],            # optional source labels
      "repro_labels": ["a", "b", "c"]       # optional reproduction labels
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Optional

from .core_types import PROB_TOL, Alphabet, DistortionMeasure, Distribution


class InstanceError(ValueError):
    """Schema or consistency error in an instance file."""


@dataclass(frozen=True)
class Instance:
    source: Distribution
    distortion: DistortionMeasure
    labels: Optional[tuple[str, ...]] = None


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise InstanceError(f"{where}: must be finite")
    return float(value)


def parse_instance(obj: Any) -> Instance:
    if not isinstance(obj, dict):
        raise InstanceError("top level: expected an object")
    unknown = set(obj) - {"source", "distortion", "labels", "repro_labels"}
    if unknown:
        raise InstanceError(f"top level: unknown fields {sorted(unknown)}")
    if "source" not in obj:
        raise InstanceError("source: missing")
    if "distortion" not in obj:
        raise InstanceError("distortion: missing")

    src = obj["source"]
    if not isinstance(src, list) or not src:
        raise InstanceError("source: expected a non-empty list of probabilities")
    probs = [_number(v, f"source[{i}]") for i, v in enumerate(src)]
    for i, v in enumerate(probs):
        if v < 0:
            raise InstanceError(f"source[{i}]: negative probability {v}")
    if abs(sum(probs) - 1.0) > PROB_TOL:
        raise InstanceError(f"source: probabilities sum to {sum(probs)!r}, not 1")
    size = len(probs)

    dist = obj["distortion"]
    if dist == "hamming":
        rows = [[0.0 if i == j else 1.0 for j in range(size)] for i in range(size)]
    elif isinstance(dist, list):
        if len(dist) != size:
            raise InstanceError(f"distortion: expected {size} rows (one per source symbol), got {len(dist)}")
        rows = []
        width = None
        for i, row in enumerate(dist):
            if not isinstance(row, list) or not row:
                raise InstanceError(f"distortion[{i}]: expected a non-empty list")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InstanceError(f"distortion[{i}]: expected {width} entries, got {len(row)}")
            vals = [_number(v, f"distortion[{i}][{j}]") for j, v in enumerate(row)]
            for j, v in enumerate(vals):
                if v < 0:
                    raise InstanceError(f"distortion[{i}][{j}]: negative distortion {v}")
            if min(vals) != 0:
                raise InstanceError(f"distortion[{i}]: row needs a zero-distortion reproduction")
            rows.append(vals)
    else:
        raise InstanceError("distortion: expected a matrix or \"hamming\"")

    labels = obj.get("labels")
    repro_labels = obj.get("repro_labels")
    try:
        if labels is not None:
            labels = Alphabet(size, tuple(labels)).labels
        d = DistortionMeasure(rows, tuple(repro_labels) if repro_labels is not None else None)
        p = Distribution(probs)
    except (TypeError, ValueError) as exc:
        raise InstanceError(str(exc)) from exc
    return Instance(p, d, labels)


def load_instance(path: str) -> Instance:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InstanceError(f"{path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_instance(obj)
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from exc
