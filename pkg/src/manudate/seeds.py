"""Stable seed derivation so adding samples never reshuffles existing ones."""

from __future__ import annotations

import hashlib


def stable_hash64(*parts: object) -> int:
    """64-bit hash of the given parts; stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def derive_seed(base_seed: int, *parts: object) -> int:
    """Seed for a sub-task, decoupled from every other sub-task's stream."""
    return (int(base_seed) ^ stable_hash64(*parts)) & 0xFFFFFFFFFFFFFFFF
