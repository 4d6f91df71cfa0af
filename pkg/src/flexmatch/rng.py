"""Counter-based random streams.

Every stream is a Philox generator whose 128-bit key is the pair
``(master_seed, stream_id)``; the Philox counter plays the role of the draw
index.  Two streams with different ids never share state, so replicate ``r``
of an experiment always sees the same numbers regardless of which worker
thread evaluates it or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def child(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.master_seed, stream_id)

    def generator(self) -> np.random.Generator:
        return make_generator(self)


def make_generator(seed: RngSeed) -> np.random.Generator:
    key = np.array([seed.master_seed, seed.stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_seed(seed: "RngSeed | int | tuple[int, int]") -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    if isinstance(seed, tuple):
        return RngSeed(int(seed[0]), int(seed[1]))
    return RngSeed(int(seed), 0)
