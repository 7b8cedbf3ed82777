"""Deterministic counter-based noise streams.

Every normal draw is addressed by (seed, slice, timestep, lane, counter), so
the same slice receives bit-identical noise no matter which worker block it
lands in or in what order blocks execute.  A splitmix64-style mix of the
coordinates keys a counter sequence whose outputs feed a Box-Muller
transform; nothing is stateful.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import DataError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(x: int) -> int:
    """splitmix64 output function on a python int (mod 2^64)."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


def _stream_key(seed: int, s: int, t: int, l: int) -> int:
    # Absorb coordinates one at a time; distinct multipliers keep the
    # coordinates from being interchangeable.
    h = _finalize(seed & _MASK)
    h = _finalize(h ^ ((s * 3 + 1) & _MASK))
    h = _finalize(h ^ ((t * 5 + 2) & _MASK))
    h = _finalize(h ^ ((l * 7 + 3) & _MASK))
    return h


def _finalize_vec(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def derive_noise(seed: int, s: int, t: int, l: int, count: int) -> np.ndarray:
    """Standard normal draws for stream coordinates (seed, s, t, l).

    Total and deterministic: the same arguments always return the same
    sequence, and streams with different coordinates are independent.
    """
    if count < 0:
        raise DataError("count must be >= 0")
    if count == 0:
        return np.zeros(0, dtype=np.float64)
    _notify_recorders(seed, s, t, l, count)
    key = _stream_key(seed, s, t, l)
    n_pairs = (count + 1) // 2
    counters = np.arange(1, 2 * n_pairs + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        words = _finalize_vec(np.uint64(key) + counters * np.uint64(_GOLDEN))
    # top 53 bits -> uniform on (0, 1); +0.5 keeps u strictly positive
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * n_pairs, dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


@dataclass(frozen=True)
class NoiseStream:
    """One addressed stream; convenience wrappers over derive_noise."""

    seed: int
    s: int
    t: int
    l: int = 0

    def normal(self, count: int) -> np.ndarray:
        return derive_noise(self.seed, self.s, self.t, self.l, count)

    def complex_field(self, shape: tuple[int, ...]) -> np.ndarray:
        """Complex field with independent unit-variance normal re/im parts."""
        size = int(np.prod(shape))
        draws = self.normal(2 * size)
        return (draws[:size] + 1j * draws[size:]).reshape(shape)


# ---------------------------------------------------------------------------
# Draw auditing: tests account for exactly how many noise fields a sampling
# pass consumes per slice.

_recorder_lock = threading.Lock()
_recorders: list["DrawRecord"] = []


class DrawRecord:
    def __init__(self) -> None:
        self.events: list[tuple[int, int, int, int, int]] = []

    def add(self, seed: int, s: int, t: int, l: int, count: int) -> None:
        with _recorder_lock:
            self.events.append((seed, s, t, l, count))


def _notify_recorders(seed: int, s: int, t: int, l: int, count: int) -> None:
    if _recorders:
        for rec in list(_recorders):
            rec.add(seed, s, t, l, count)


@contextmanager
def record_draws():
    """Collect (seed, s, t, l, count) for every derive_noise call in scope."""
    rec = DrawRecord()
    with _recorder_lock:
        _recorders.append(rec)
    try:
        yield rec
    finally:
        with _recorder_lock:
            _recorders.remove(rec)
