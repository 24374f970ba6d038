"""Versioned JSON checkpoints for trained models.

One envelope for every model kind: metadata fields plus named float64
matrices stored as row-major nested lists. Serialization sorts keys and
uses repr-exact floats, so identical models produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .scenes import DatasetFormatError

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path: str, kind: str, meta: dict, matrices: dict[str, np.ndarray]) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "matrices": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in matrices.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path: str, expected_kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(
                f"cannot parse checkpoint {path}: line {exc.lineno}: {exc.msg}"
            ) from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported checkpoint format_version {version!r} in {path}"
        )
    kind = payload.get("kind")
    if kind != expected_kind:
        raise DatasetFormatError(
            f"checkpoint {path} holds a {kind!r} model, expected {expected_kind!r}"
        )
    try:
        matrices = {
            name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in payload["matrices"].items()
        }
        meta = payload["meta"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"malformed checkpoint {path}: {exc!r}") from exc
    return meta, matrices
