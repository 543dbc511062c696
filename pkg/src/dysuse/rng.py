"""Counter-based random streams for reproducible, batch-independent simulation.

Every uniform draw is a pure function of ``(master_seed, simulation index,
counter)``.  A batch of simulations therefore produces the same numbers
whether it is run serially, in chunks, or across workers.

The mixing function is the SplitMix64 finalizer applied to a keyed counter.
"""

from __future__ import annotations

import numpy as np

__all__ = ["mix64", "derive_seed", "SimulationStreams", "counter", "PURPOSE"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# Draw purposes.  Kept distinct so that, e.g., IC coins and TR trigger
# inclusions never share numbers within one simulation.
PURPOSE = {
    "ic": 1,
    "ic_once": 2,
    "tr": 3,
    "tr_once": 4,
    "lt": 5,
}


def mix64(x):
    """SplitMix64 finalizer over a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * _M1
        x = x ^ (x >> np.uint64(27))
        x = x * _M2
        x = x ^ (x >> np.uint64(31))
    return x


def derive_seed(*parts: int) -> int:
    """Hash a tuple of non-negative integers into a 63-bit seed."""
    h = np.array([0x243F6A8885A308D3], dtype=np.uint64)
    for p in parts:
        with np.errstate(over="ignore"):
            h = mix64(h + _GOLDEN + np.array([int(p) & _MASK64], dtype=np.uint64))
    return int(h[0]) >> 1


def counter(purpose: str, t: int, index) -> np.ndarray:
    """Encode (purpose, timestamp, index) into uint64 counters.

    ``index`` may be an array; indices must be below 2**40 and ``t`` below 2**16.
    """
    index = np.asarray(index, dtype=np.uint64)
    head = (PURPOSE[purpose] << 56) | (int(t) << 40)
    return np.uint64(head) | index


class SimulationStreams:
    """Independent uniform streams for a batch of simulation indices.

    Parameters
    ----------
    master_seed : int
        Seed shared by the whole Monte-Carlo run.
    sim_indices : array_like of int
        Global simulation indices covered by this batch.
    """

    def __init__(self, master_seed: int, sim_indices):
        self.master_seed = int(master_seed)
        self.sim_indices = np.atleast_1d(np.asarray(sim_indices, dtype=np.int64))
        root = mix64(np.array([self.master_seed & _MASK64], dtype=np.uint64) + _GOLDEN)
        with np.errstate(over="ignore"):
            self.keys = mix64(root ^ ((self.sim_indices.astype(np.uint64) + np.uint64(1)) * _GOLDEN))

    def __len__(self) -> int:
        return len(self.sim_indices)

    def uniform(self, counters) -> np.ndarray:
        """Uniform draws in the open interval (0, 1), shape ``(batch, len(counters))``."""
        c = mix64(np.atleast_1d(np.asarray(counters, dtype=np.uint64)))
        with np.errstate(over="ignore"):
            bits = mix64(self.keys[:, None] + c[None, :])
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)
