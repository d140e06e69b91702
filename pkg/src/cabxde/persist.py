"""Versioned JSON checkpoints.

Every artifact is wrapped in an envelope carrying ``schema_version``,
``kind``, ``created_at`` and an echo of the producing config. Floats are
written with ``repr`` precision by the json module, so reloading a
checkpoint reproduces parameters bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from .errors import DataError, MissingArtifactError

SCHEMA_VERSION = 1
KINDS = ("bilstm", "gbdt", "ensemble", "scaler", "manifest")


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the stamp for reproducible artifacts
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        when = datetime.now(timezone.utc).replace(microsecond=0)
    return when.isoformat()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def save_checkpoint(path, kind: str, payload: dict, config: dict | None = None) -> Path:
    if kind not in KINDS:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    env = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "created_at": _timestamp(),
        "config": config,
        "payload": payload,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(env, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path, kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing {kind} checkpoint: {path}")
    env = json.loads(path.read_text(encoding="utf-8"))
    if env.get("kind") != kind:
        raise DataError(f"{path} holds a {env.get('kind')!r} checkpoint, expected {kind!r}")
    if env.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path} has schema_version {env.get('schema_version')}, expected {SCHEMA_VERSION}")
    return env
