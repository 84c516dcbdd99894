"""Named, reproducible random streams derived from a single integer seed."""

import zlib

import numpy as np


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def derive(seed, *path):
    """SeedSequence for ``seed`` along a path of names and/or integers.

    ``derive(seed, "source", 3)`` is the stream for device 3 of the source
    generator; it does not depend on how many other streams were drawn.
    """
    key = tuple(stream_key(p) if isinstance(p, str) else int(p) for p in path)
    return np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key)


def rng(seed, *path):
    return np.random.default_rng(derive(seed, *path))
