"""Canonical JSON helpers shared by scenario files, weights and dumps.

All writers sort keys and end with a newline so identical inputs give
byte-identical files; writes go through a temp file plus rename so a
crash never leaves a half-written artifact.
"""

from __future__ import annotations

import json
import os
import tempfile

from .errors import SceneFormatError


def canonical_dumps(obj, pretty: bool = True) -> str:
    if pretty:
        return json.dumps(obj, sort_keys=True, indent=2) + "\n"
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj, pretty: bool = True):
    atomic_write_text(path, canonical_dumps(obj, pretty=pretty))


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def check_format(doc: dict, path, expected_format: str, expected_version: int):
    """Validate the (format, version) header every artifact file carries."""
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{path}: expected a JSON object at top level")
    fmt = doc.get("format")
    if fmt != expected_format:
        raise SceneFormatError(f"{path}: format is {fmt!r}, expected {expected_format!r}")
    version = doc.get("version")
    if version != expected_version:
        raise SceneFormatError(
            f"{path}: version {version!r} not supported (expected {expected_version})"
        )


WEIGHTS_FORMAT = "interplan-weights"
WEIGHTS_VERSION = 1


def save_weights(path, energy_weights, planner_weights):
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "energy": energy_weights.to_json_dict(),
        "planner": planner_weights.to_json_dict(),
    }
    write_json(path, doc)


def load_weights(path):
    """Returns (EnergyWeights, PlannerWeights) from a versioned weights file."""
    from .energy import EnergyWeights
    from .planner import PlannerWeights

    doc = load_json(path)
    check_format(doc, path, WEIGHTS_FORMAT, WEIGHTS_VERSION)
    return EnergyWeights.from_json_dict(doc["energy"]), PlannerWeights.from_json_dict(doc["planner"])
