"""Deterministic seed derivation shared by every module."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from an arbitrary tuple of printable parts.

    Python's ``hash`` is salted per process, so a blake2b digest of the
    ``repr`` of the parts is used instead.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") >> 1


def rng_for(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
