"""Counter-based uniform streams for reproducible, partition-independent Monte Carlo.

Every stochastic quantity in the package is a pure function of ``(seed, index)``
where ``index`` addresses a position in one fixed virtual stream of uniforms per
seed. Workers may generate any contiguous window of that stream independently;
the result never depends on how the index range was partitioned.

Philox natively emits blocks of 4 outputs per counter value, so jumping to an
arbitrary absolute index means advancing to the enclosing block and discarding
the unaligned head.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 4  # Philox outputs per counter increment


def uniform_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms at absolute positions [start, start+count) of the seed's stream."""
    if start < 0 or count < 0:
        raise ValueError(f"need start >= 0 and count >= 0, got {start}, {count}")
    if count == 0:
        return np.empty(0)
    aligned = (start // _BLOCK) * _BLOCK
    pad = start - aligned
    bg = np.random.Philox(key=np.uint64(seed))
    bg.advance(aligned // _BLOCK)
    out = np.random.Generator(bg).random(pad + count)
    return out[pad:] if pad else out


def uniform_at(seed: int, index: int) -> float:
    """Single uniform at an absolute stream position."""
    return float(uniform_stream(seed, index, 1)[0])


def uniform_block(seed: int, first_replicate: int, n_replicates: int, stride: int) -> np.ndarray:
    """Replicate-shaped window: row j holds the uniforms of replicate first_replicate+j.

    Replicate r owns stream positions [r*stride, (r+1)*stride).
    """
    flat = uniform_stream(seed, first_replicate * stride, n_replicates * stride)
    return flat.reshape(n_replicates, stride)
