"""Named random substreams derived from one master seed.

Each consumer (data, init, batch, cond, ...) gets an independent generator,
so changing how many draws one component makes never shifts another.
"""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream_key(name), *map(int, extra)])
