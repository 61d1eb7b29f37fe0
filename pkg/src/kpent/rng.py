"""Counter-based random streams keyed by (seed, stream id, chunk index).

Every Monte Carlo loop draws its samples in fixed-size chunks.  Chunk ``c`` of
stream ``s`` under seed ``k`` comes from a Philox generator keyed by ``(k, s)``
with its counter started at ``c``; sample ``i`` therefore depends only on
``(k, s, i)``.  Results are identical for any number of workers and any
order of evaluation.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np

CHUNK = 1 << 16
_MASK = (1 << 64) - 1


def stream_id(name: str) -> int:
    """Stable 64-bit id for a named stream."""
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def chunk_generator(seed: int, stream: int, chunk: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=[seed & _MASK, stream & _MASK], counter=[0, chunk & _MASK, 0, 0])
    return np.random.Generator(bitgen)


def chunk_sizes(n: int, chunk: int = CHUNK) -> List[int]:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn: Callable, n: int, workers: int = 1, chunk: int = CHUNK) -> list:
    """Call ``fn(chunk_index, size)`` for every chunk covering ``n`` samples.

    Results come back in chunk order whatever the worker count.
    """
    sizes = chunk_sizes(n, chunk)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(c, s) for c, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def derive_seed(master: int, *labels) -> int:
    """Deterministic 64-bit sub-seed for (master seed, row index, ...)."""
    words = [int(master) & _MASK]
    for lab in labels:
        words.append(stream_id(lab) if isinstance(lab, str) else int(lab) & _MASK)
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def instance_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for building random test instances (not for MC estimators)."""
    return np.random.default_rng(derive_seed(seed, *labels))
