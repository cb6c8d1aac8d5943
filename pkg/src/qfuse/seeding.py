"""Deterministic per-component seed derivation.

A single run seed fans out to independent, stable seeds for each named
component (data generation, parameter init, search, splits, ...) so
adding a consumer never shifts the streams of existing ones.
"""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, name: str) -> int:
    """Map (seed, name) to a uint32 via sha256; stable across runs and
    platforms."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
