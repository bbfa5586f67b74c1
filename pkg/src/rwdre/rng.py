"""Reproducible random streams and replica fan-out.

Every replica owns an independent counter-based (Philox) generator keyed
by ``(master seed, crc32(kind tag), replica index)`` through
:class:`numpy.random.SeedSequence`.  Anyone holding the triple can
reproduce a replica's stream without running the others.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import zlib
from typing import Callable, Sequence

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def seed_sequence(seed: int, tag: str = "", replica: int = 0) -> np.random.SeedSequence:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, tag_key(tag), int(replica)])


def generator(seed: int, tag: str = "", replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, tag, replica)))


class RandomStream:
    """Buffered scalar uniforms and exponentials on top of a Generator.

    Simulation loops draw one number at a time; pulling blocks from numpy
    and handing out python floats keeps that cheap.
    """

    __slots__ = ("gen", "_buf", "_i", "_block")

    def __init__(self, gen: np.random.Generator, block: int = 2048):
        self.gen = gen
        self._block = block
        self._buf: list = []
        self._i = 0

    @classmethod
    def from_seed(cls, seed: int, tag: str = "", replica: int = 0) -> "RandomStream":
        return cls(generator(seed, tag, replica))

    def u(self) -> float:
        i = self._i
        if i >= len(self._buf):
            self._buf = self.gen.random(self._block).tolist()
            i = 0
        self._i = i + 1
        return self._buf[i]

    def exp(self, rate: float) -> float:
        if rate <= 0.0:
            return math.inf
        return -math.log(1.0 - self.u()) / rate

    def bernoulli(self, p: float) -> float:
        return 1.0 if self.u() < p else 0.0


# ---------------------------------------------------------------------------
# replica fan-out

_TASK: Callable | None = None


def _call(i: int):
    return _TASK(i)


def run_replicas(task: Callable[[int], object], replicas: Sequence[int] | int, threads: int = 1) -> list:
    """Evaluate ``task(i)`` for every replica index, results in replica order.

    With ``threads > 1`` the work is spread over forked worker processes; the
    task is inherited through fork, so closures need not be picklable.
    Ordering of the returned list never depends on the thread count.
    """
    global _TASK
    idx = list(range(replicas)) if isinstance(replicas, int) else list(replicas)
    if threads <= 1 or len(idx) < 2 or "fork" not in mp.get_all_start_methods():
        return [task(i) for i in idx]
    _TASK = task
    try:
        ctx = mp.get_context("fork")
        chunk = max(1, len(idx) // (threads * 8))
        with ctx.Pool(threads) as pool:
            return pool.map(_call, idx, chunksize=chunk)
    finally:
        _TASK = None
