"""Counter-based random streams.

Each (seed, purpose) pair gets its own Philox key, so streams never overlap
and do not depend on the order in which runs or components are created.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, name: str) -> tuple[int, int]:
    return int(seed) & _MASK64, zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array(stream_key(seed, name), dtype=np.uint64)))
