"""Counter-based random substreams.

Every trial owns its own stream, keyed by ``(master_seed, purpose, index)``.
The Philox key is derived from ``(master_seed, purpose)`` and the trial index
is written into the third counter word, so two trials are at least 2**128
blocks apart.  Results therefore never depend on how trials are scheduled.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

MAX_SEED = 2**64 - 1


@lru_cache(maxsize=256)
def _philox_key(master_seed: int, purpose: str) -> tuple[int, int]:
    tag = zlib.crc32(purpose.encode("utf-8"))
    state = np.random.SeedSequence(master_seed, spawn_key=(tag,)).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def _counter(index: int) -> np.ndarray:
    return np.array([0, 0, index & MAX_SEED, index >> 64], dtype=np.uint64)


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass(frozen=True)
class RandomStream:
    master_seed: int
    purpose: str
    stream_index: int

    def __post_init__(self):
        check_seed(self.master_seed)
        if self.stream_index < 0:
            raise ValueError("stream_index must be nonnegative")

    def bit_generator(self) -> np.random.Philox:
        key = np.array(_philox_key(self.master_seed, self.purpose), dtype=np.uint64)
        return np.random.Philox(key=key, counter=_counter(self.stream_index))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())


def normal_block(master_seed: int, purpose: str, start: int, stop: int, n: int, sigma: float = 1.0) -> np.ndarray:
    """Noise for trials ``start .. stop-1``: row ``t - start`` is trial ``t``'s stream.

    Equivalent to ``RandomStream(master_seed, purpose, t).generator().standard_normal(n)``
    per row, but reuses a single bit generator by rewriting its counter.
    """
    key = np.array(_philox_key(check_seed(master_seed), purpose), dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    gen = np.random.Generator(bitgen)
    state = bitgen.state
    out = np.empty((stop - start, n), dtype=np.float64)
    for row, t in enumerate(range(start, stop)):
        state["state"]["counter"] = _counter(t)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bitgen.state = state
        gen.standard_normal(out=out[row])
    if sigma != 1.0:
        out *= sigma
    return out
