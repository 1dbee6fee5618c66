"""Labelled, reproducible random streams.

Every consumer derives its generator from ``(root_seed, *labels)`` so that
results do not depend on the order in which streams are created.
"""
import hashlib

import numpy as np

DEFAULT_SEED = 20240521


def stream_key(root_seed: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(root_seed).to_bytes(8, "little", signed=False))
    for label in labels:
        tag = f"{type(label).__name__}:{label}".encode()
        h.update(len(tag).to_bytes(4, "little"))
        h.update(tag)
    return int.from_bytes(h.digest(), "little")


def seed_stream(root_seed: int, *labels) -> np.random.Generator:
    """e.g. ``seed_stream(seed, "round", t, "client", k)``."""
    return np.random.Generator(np.random.PCG64(stream_key(root_seed % (1 << 64), *labels)))
