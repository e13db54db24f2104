"""Checkpoint container.

A checkpoint is an ``.npz`` archive. Every array is stored under a dotted
name (``rnn.w_rec``, ``out.b_out``, ``opt.velocity.rnn.w_rec`` ...) and a
JSON document under ``__meta__`` records the format version, config echo,
shapes, optimizer scalars, RNG state and a SHA-256 checksum over all of it.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

FORMAT = "rnnopt-checkpoint"
VERSION = 1


def _digest(arrays, meta):
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()


def save_checkpoint(path, arrays, meta):
    """Write ``arrays`` (name -> ndarray) and JSON-able ``meta`` to ``path``."""
    meta = dict(meta, format=FORMAT, version=VERSION,
                shapes={k: list(np.shape(v)) for k, v in arrays.items()})
    meta["checksum"] = _digest(arrays, meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, __meta__=np.array(json.dumps(meta)), **arrays)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    """Return ``(arrays, meta)`` after verifying format, shapes and checksum."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            data = {k: npz[k] for k in npz.files}
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if "__meta__" not in data:
        raise CheckpointError(f"{path}: missing metadata")
    meta = json.loads(str(data.pop("__meta__")))
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an rnnopt checkpoint")
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    checksum = meta.pop("checksum", None)
    if checksum != _digest(data, meta):
        raise CheckpointError(f"{path}: checksum mismatch")
    for name, shape in meta["shapes"].items():
        if name not in data or list(data[name].shape) != shape:
            raise CheckpointError(f"{path}: array {name} missing or misshapen")
    return data, meta
