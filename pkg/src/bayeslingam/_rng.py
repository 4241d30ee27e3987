import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    if isinstance(k, bytes):
        return zlib.crc32(k)
    return int(k)


def substream(seed, *keys) -> np.random.Generator:
    """Independent generator for the named substream ``keys`` of ``seed``.

    The same ``(seed, keys)`` always yields the same stream, regardless of
    what other streams were drawn before.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)
