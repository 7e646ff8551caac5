"""Counter-based random number streams.

Every stochastic routine in this package draws from an :class:`RngStream`,
a value object naming one logical stream by the triple
``(seed, replication_index, stream_id)``.  The triple is mapped to a
Philox4x64 counter-based generator, so the stream content is a pure
function of the triple: replication ``r`` produces identical numbers no
matter which worker runs it, in what order, or how many workers exist.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Name of one reproducible random stream.

    Attributes:
        seed: 64-bit experiment seed.
        replication_index: index of the Monte Carlo replication.
        stream_id: sub-stream within a replication (path draws,
            backward draws, ... are kept on distinct ids so adding a
            consumer never shifts another consumer's numbers).
    """

    seed: int
    replication_index: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.replication_index < 0 or self.stream_id < 0:
            raise ValueError("replication_index and stream_id must be >= 0")

    def generator(self) -> np.random.Generator:
        """Build the generator for this triple (pure, no global state)."""
        key = np.array([self.seed & _MASK64, self.replication_index & _MASK64],
                       dtype=_U64)
        bitgen = np.random.Philox(key=key, counter=[0, 0, 0, self.stream_id & _MASK64])
        return np.random.Generator(bitgen)

    def with_replication(self, index: int) -> "RngStream":
        return replace(self, replication_index=index)

    def with_stream(self, stream_id: int) -> "RngStream":
        return replace(self, stream_id=stream_id)
