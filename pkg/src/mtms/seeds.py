"""Deterministic seed derivation.

Every random choice in the pipeline draws from a sub-seed derived from the
experiment seed plus a tuple of string/int tags (a counter scheme backed by
blake2b).  Same root seed and tags -> same stream, on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 63) - 1


def derive_seed(root: int, *tags: object) -> int:
    """Derive a 63-bit sub-seed from a root seed and a tag path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little") & _MASK


def rng_for(root: int, *tags: object) -> np.random.Generator:
    """PCG64 generator seeded by :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *tags)))
