import zlib

import numpy as np


def stream(seed, purpose):
    """Independent generator keyed by ``(seed, purpose)``.

    Different purpose strings give statistically independent streams for the
    same seed, so adding a new consumer never perturbs existing ones.
    """
    key = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))
