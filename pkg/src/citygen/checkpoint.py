"""Self-describing checkpoint container: a .npz holding a JSON meta header
plus named float32 weight arrays. Avoids pickle so files are portable and
round-trip bit-exact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError

FORMAT_VERSION = 1
_WEIGHT_PREFIX = "weight::"


def save_checkpoint(path, meta: dict, state_dict: dict) -> None:
    meta = dict(meta, format_version=FORMAT_VERSION)
    arrays = {}
    for key, tensor in state_dict.items():
        arrays[_WEIGHT_PREFIX + key] = tensor.detach().cpu().numpy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    # np.savez appends .npz when missing; keep the caller's exact path
    if not path.exists() and path.with_suffix(path.suffix + ".npz").exists():
        path.with_suffix(path.suffix + ".npz").rename(path)


def load_checkpoint(path):
    """Return (meta dict, state_dict of torch tensors)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported checkpoint format {meta.get('format_version')!r}"
            )
        state_dict = {
            key[len(_WEIGHT_PREFIX) :]: torch.from_numpy(np.array(data[key]))
            for key in data.files
            if key.startswith(_WEIGHT_PREFIX)
        }
    return meta, state_dict


def checkpoint_fingerprint(path) -> str:
    """Stable content digest used in manifests and service job records."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
