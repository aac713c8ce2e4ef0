"""Small shared helpers: canonical JSON, hashing, integer utilities."""

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace so equal values
    produce byte-identical text."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def next_pow2_at_least_mean(total: int, count: int) -> int:
    """Smallest power of two >= total/count, computed in exact integer
    arithmetic so an exact mean of 64 yields 64, not 128."""
    if count <= 0:
        raise ValueError("count must be positive")
    if total <= 0:
        return 1
    p = 1
    while p * count < total:
        p *= 2
    return p
