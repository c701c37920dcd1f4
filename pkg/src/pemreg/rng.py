"""Counter-based uniform random streams.

Every stochastic draw in the simulator is a pure function of
(master seed, stream id, counter, draw index).  Streams never share
state, so partitioning work across threads or processes cannot change
any draw, and adding devices to a fleet does not reshuffle the draws
of existing devices.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = float(2.0 ** -53)

# Stream ids keep independent draw purposes from colliding on one counter.
STREAM_REQUEST = 1
STREAM_DRAW_EVENT = 2
STREAM_PACKET_LEN = 3
STREAM_COORDINATOR = 4
STREAM_INIT = 5


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps mod 2**64 by design
    x = (x + _M1).astype(np.uint64)
    x = (x ^ (x >> _S30)) * _M2
    x = (x ^ (x >> _S27)) * _M3
    return x ^ (x >> _S31)


def hash_u64(seed: int, stream: int, entity: np.ndarray | int, counter: int) -> np.ndarray:
    """64-bit hash of (seed, stream, entity, counter); entity may be an array."""
    with np.errstate(over="ignore"):
        e = np.asarray(entity, dtype=np.uint64)
        h = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        h = _mix(h ^ np.uint64(stream))
        h = _mix(h ^ e)
        return _mix(h ^ np.uint64(counter & 0xFFFFFFFFFFFFFFFF))


def uniform(seed: int, stream: int, entity: np.ndarray | int, counter: int) -> np.ndarray:
    """Uniform draws on [0, 1), one per entity, at the given counter."""
    bits = hash_u64(seed, stream, entity, counter)
    return (bits >> _S11).astype(np.float64) * _INV53


def uniform_scalar(seed: int, stream: int, entity: int, counter: int) -> float:
    return float(uniform(seed, stream, np.uint64(entity), counter))
