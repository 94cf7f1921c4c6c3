"""Per-path counter-based Gaussian streams.

Path i of a run with seed s draws from Philox-4x64 with key derived from s
(SeedSequence(s).generate_state(2)) and starting counter (0, i, 0, 0). The
path index sits in the second counter word, so streams never overlap for
fewer than 2^64 blocks per path. Output depends only on (seed, path index)
and the number of values requested so far, never on how paths are grouped
or how many threads run.

Normals use numpy's ziggurat sampler (Generator.standard_normal) on top of
each path's Philox stream. Splitting a request into pieces gives the same
values as one large request.
"""
from __future__ import annotations

import os

import numpy as np


def key_from_seed(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed) & ((1 << 64) - 1)).generate_state(2, np.uint64)


def thread_count() -> int:
    env = os.environ.get("QSA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def path_generator(key: np.ndarray, path_id: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=key, counter=np.array([0, path_id, 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


class PathStreams:
    """Independent Gaussian streams for paths first .. first+count-1."""

    def __init__(self, seed: int, first: int, count: int):
        key = key_from_seed(seed)
        self.path_ids = np.arange(first, first + count)
        self._gens = [path_generator(key, int(pid)) for pid in self.path_ids]

    def __len__(self):
        return len(self._gens)

    def normals(self, k: int) -> np.ndarray:
        """Next k normals of every stream, shape (count, k)."""
        out = np.empty((len(self._gens), k))
        for i, g in enumerate(self._gens):
            g.standard_normal(out=out[i])
        return out
