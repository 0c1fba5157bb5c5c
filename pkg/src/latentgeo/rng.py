"""Named random streams derived from a single integer seed."""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (list, tuple)):
        return zlib.crc32(repr([_key(p) for p in part]).encode())
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def derive_rng(seed, *names):
    """Generator for the stream ``hash(seed, *names)``.

    Streams with different names are statistically independent and stable
    across processes (no reliance on Python's salted ``hash``).
    """
    return np.random.default_rng(np.random.SeedSequence([_key(seed), *(_key(n) for n in names)]))
