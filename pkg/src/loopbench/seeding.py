"""Platform-independent seed derivation."""
from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Hash the parts into a 63-bit seed; stable across runs and platforms."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1
