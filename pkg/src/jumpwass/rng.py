"""Counter-based per-path random streams.

Every path owns an independent Philox stream keyed by ``(seed, stream, index)``.
Draws for a path never depend on how paths are grouped into blocks or spread
over threads, which is what makes results bit-reproducible under any degree of
parallelism.
"""
from __future__ import annotations

import numpy as np

__all__ = ["path_generator", "STREAM_COUPLED", "STREAM_FLOW", "STREAM_OUTER", "STREAM_INNER"]

STREAM_COUPLED = 0
STREAM_FLOW = 1
STREAM_OUTER = 2
STREAM_INNER = 3

_MASK64 = (1 << 64) - 1


def path_generator(seed: int, index: int, stream: int = STREAM_COUPLED) -> np.random.Generator:
    """Generator for path ``index`` of ``stream`` under a 64-bit ``seed``.

    The Philox key is the seed; the path index and stream id fill the 256-bit
    counter's upper words, so distinct ``(stream, index)`` pairs never overlap.
    """
    if not 0 <= int(index) < 2**48:
        raise ValueError("path index out of range")
    if not 0 <= int(stream) < 2**16:
        raise ValueError("stream id out of range")
    counter = [0, 0, int(index), int(stream)]
    bitgen = np.random.Philox(key=int(seed) & _MASK64, counter=counter)
    return np.random.Generator(bitgen)
