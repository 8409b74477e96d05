"""Deterministic RNG stream derivation.

Every random decision in a run is drawn from a stream derived by hashing the
master seed together with a purpose tag (and client id / round index where
relevant), so results are independent of evaluation order and thread count.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Collapse an ordered tuple of labels into a 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
