from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UINT64_MASK = (1 << 64) - 1


@dataclass
class RngStream:
    """Counter-based random stream.

    Every draw builds a Philox generator keyed by ``seed`` whose counter
    block carries the call index in its third word, then advances
    ``counter`` by one. The same ``(seed, counter)`` pair always
    reproduces the same draw, and a stream can be handed to another task
    by value.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & _UINT64_MASK
        self.counter = int(self.counter) & _UINT64_MASK

    def next_generator(self) -> np.random.Generator:
        bit_generator = np.random.Philox(
            key=self.seed, counter=[0, 0, self.counter, 0]
        )
        self.counter = (self.counter + 1) & _UINT64_MASK
        return np.random.Generator(bit_generator)

    def split(self, index: int) -> "RngStream":
        child_seed = np.random.SeedSequence([self.seed, self.counter, int(index)])
        return RngStream(int(child_seed.generate_state(1, np.uint64)[0]))

    def gaussian(self, n: int | tuple[int, ...], dtype=np.float32) -> np.ndarray:
        return self.next_generator().standard_normal(n).astype(dtype, copy=False)

    def uniform(
        self, low=0.0, high=1.0, size: int | tuple[int, ...] | None = None
    ) -> np.ndarray:
        return self.next_generator().uniform(low, high, size)

    def integers(self, high: int, size: int | tuple[int, ...] | None = None):
        return self.next_generator().integers(0, high, size)

    def random(self, size: int | tuple[int, ...] | None = None):
        return self.next_generator().random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.next_generator().permutation(n)


def rng_gaussian(stream: RngStream, n: int) -> np.ndarray:
    return stream.gaussian(n)
