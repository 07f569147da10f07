"""
Seeded random streams.

Every stochastic step draws from numpy's PCG64 bit generator seeded through a
SeedSequence. Independent streams are addressed by a tuple of keys appended to
the root seed as the SeedSequence spawn key, so a stream for query "q17" of
draw 3 is the same whatever order the queries or draws are processed in.
"""
import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]

MAX_SEED = 2 ** 64 - 1


def stream_key(key: Key) -> int:
    """Map a key to a stable 64-bit integer (text keys via blake2b)"""
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, *keys: Key) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *keys: Key) -> int:
    """A 64-bit child seed, for handing to code that takes a plain integer"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream_key(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
