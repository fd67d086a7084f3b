"""Binary parameter container: named arrays plus a hashed config header.

Loading verifies the architecture config hash and refuses mismatches, so a
checkpoint can never be silently loaded into a differently-shaped model.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ParseError


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def save_params(path: str | Path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = {"config": config, "hash": config_hash(config)}
    payload = {"__meta__": np.array(json.dumps(meta))}
    for name, arr in arrays.items():
        payload[name] = np.asarray(arr)
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_params(path: str | Path, expect_config: dict | None = None) -> tuple[dict, dict]:
    """Returns (config, {name: array}). Raises ParseError on hash mismatch."""
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data:
                raise ParseError(f"{path}: not a parameter container")
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot read parameter container {path}: {e}") from e
    config = meta.get("config", {})
    if meta.get("hash") != config_hash(config):
        raise ParseError(f"{path}: corrupted config header")
    if expect_config is not None and config_hash(expect_config) != config_hash(config):
        raise ParseError(
            f"{path}: checkpoint config hash {config_hash(config)} does not match "
            f"expected {config_hash(expect_config)}")
    return config, arrays
