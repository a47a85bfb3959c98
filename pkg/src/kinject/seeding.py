"""Deterministic 64-bit seed derivation, stable across platforms and runs."""

import hashlib


def hash64(seed, *parts):
    """Mix a base seed with arbitrary string/int parts into a 64-bit value.

    Used to derive per-record and per-example seeds so that parallel
    generation stays independent of iteration order.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for p in parts:
        h.update(b"\x00")
        h.update(str(p).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")
