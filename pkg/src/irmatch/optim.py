"""Adam optimizer and the binary checkpoint format.

A checkpoint is one file: a magic line, a canonical JSON manifest line
(model config, parameter names and shapes, blob checksum), then the raw
little-endian float64 parameter blob in sorted-name order.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import (
    ChecksumMismatch,
    CorruptPayload,
    NonFiniteGradient,
    VersionMismatch,
)
from .tensor import Tensor
from .util import canonical_json, sha256_hex

CKPT_MAGIC = b"GBMCKPT1"


@dataclass
class AdamState:
    lr: float = 6.6e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], state: AdamState) -> None:
    """One update with bias correction. Parameters without a gradient
    this step are left alone. Aborts before touching anything if any
    gradient is non-finite."""
    live = [(name, p) for name, p in params.items() if p.grad is not None]
    for name, p in live:
        if not np.isfinite(p.grad).all():
            raise NonFiniteGradient("gradient for %s is not finite" % name)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correct1 = 1.0 - b1 ** state.t
    correct2 = 1.0 - b2 ** state.t
    for name, p in live:
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
        v = state.v.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            state.v[name] = v
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / correct1
        vhat = v / correct2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def zero_gradients(params: Dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def save_checkpoint(path: str, params: Dict[str, Tensor], config: dict) -> None:
    names = sorted(params)
    blob = b"".join(
        np.ascontiguousarray(params[n].data, dtype="<f8").tobytes() for n in names)
    manifest = {
        "version": 1,
        "config": config,
        "params": [{"name": n, "shape": list(params[n].data.shape)} for n in names],
        "blob_sha256": sha256_hex(blob),
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + b"\n")
        fh.write(canonical_json(manifest).encode("ascii") + b"\n")
        fh.write(blob)


def load_checkpoint(path: str) -> Tuple[Dict[str, Tensor], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, sep, rest = raw.partition(b"\n")
    if magic != CKPT_MAGIC or not sep:
        raise CorruptPayload("bad checkpoint magic")
    manifest_line, sep, blob = rest.partition(b"\n")
    if not sep:
        raise CorruptPayload("truncated checkpoint header")
    try:
        manifest = json.loads(manifest_line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload("unreadable manifest: %s" % exc) from exc
    if manifest.get("version") != 1:
        raise VersionMismatch("checkpoint version %r" % manifest.get("version"))
    if sha256_hex(blob) != manifest.get("blob_sha256"):
        raise ChecksumMismatch("parameter blob does not match its checksum")
    params: Dict[str, Tensor] = {}
    offset = 0
    for entry in manifest.get("params", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        chunk = blob[offset: offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptPayload("blob shorter than manifest shapes")
        arr = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        params[entry["name"]] = Tensor(arr.copy(), requires_grad=True,
                                       name=entry["name"])
        offset += nbytes
    if offset != len(blob):
        raise CorruptPayload("blob longer than manifest shapes")
    return params, manifest.get("config", {})
