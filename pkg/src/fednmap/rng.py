"""Counter-based random streams addressed by (seed, lane).

Each draw site in the simulation owns a lane ``(client, round, local_step,
draw)``. The lane is written into the upper words of a Philox counter and the
seed (plus a purpose tag) into its key, so a stream is a pure function of its
address: no sequential generator is ever shared between clients or rounds.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

import numpy as np

_U32 = (1 << 32) - 1
_U64 = (1 << 64) - 1
_local = threading.local()


class Purpose(enum.IntEnum):
    GRADIENT = 0
    PARTITION = 1
    INIT = 2
    PROBLEM = 3
    PROBE = 4


@dataclass(frozen=True)
class RngStream:
    seed: int
    client: int = 0
    round: int = 0
    step: int = 0
    draw: int = 0
    purpose: Purpose = Purpose.GRADIENT

    def __post_init__(self):
        if not 0 <= self.seed <= _U64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        for name in ("client", "round", "step"):
            if not 0 <= getattr(self, name) <= _U32:
                raise ValueError(f"{name} must fit in 32 bits")
        if not 0 <= self.draw <= _U64:
            raise ValueError("draw counter must fit in 64 bits")

    @property
    def lane(self) -> tuple[int, int, int, int]:
        return (self.client, self.round, self.step, self.draw)

    def _counter_key(self):
        # Word 0 is left for Philox's own block counter within the lane.
        counter = [0, self.draw, (self.round << 32) | self.step, self.client]
        return counter, self.seed | (int(self.purpose) << 64)

    def generator(self) -> np.random.Generator:
        counter, key = self._counter_key()
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def standard_normal(self, size: int) -> np.ndarray:
        """Same values as ``generator().standard_normal(size)``, without building a generator.

        A per-thread Philox is reset to this lane's state, which is several times
        cheaper than constructing one; this is the hot path of Gaussian noise.
        """
        gen = getattr(_local, "gen", None)
        if gen is None:
            gen = _local.gen = np.random.Generator(np.random.Philox(0))
        counter, key = self._counter_key()
        gen.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array(counter, dtype=np.uint64),
                      "key": np.array([key & _U64, key >> 64], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return gen.standard_normal(size)

    def with_draw(self, draw: int) -> "RngStream":
        return RngStream(self.seed, self.client, self.round, self.step, draw, self.purpose)


def gradient_stream(seed: int, client: int, round: int, step: int, draw: int = 0) -> RngStream:
    return RngStream(seed, client, round, step, draw, Purpose.GRADIENT)
