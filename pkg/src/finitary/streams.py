"""Counter-based uniform streams with random access.

Every uniform is a pure function of ``(seed, stream_id, index, draw)``.
``index`` ranges over all of Z, so chains can be started at any negative
time and re-read any number of times.  ``draw`` lets one index own a whole
sub-sequence of uniforms (used for block fills and excursion paths).

The mixer is the SplitMix64 finalizer applied over the key words; the
scalar path uses Python ints and the vector path uses wrapping uint64
arithmetic, and the two agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_DRAW_MUL = 0xD1B54A32D192ED03
_SCALE = 1.0 / (1 << 53)

# Domain-separation tags.
Z_CHAIN = 0
FILL = 1
EXCURSION = 2
THIN = 3
ORACLE = 4
CFTP_BASE = 1 << 20


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class UniformStream:
    """Indexed i.i.d. uniforms on [0, 1).

    Parameters
    ----------
    seed : int
        64-bit key (reduced mod 2**64).
    stream_id : int
        Domain-separation tag; use the module constants.
    """

    seed: int
    stream_id: int = Z_CHAIN
    _key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        k = _mix((self.seed & MASK64) ^ _mix((self.stream_id + 1) * GOLDEN & MASK64))
        object.__setattr__(self, "_key", k)

    def with_stream(self, stream_id: int) -> "UniformStream":
        return UniformStream(self.seed, stream_id)

    def _draw_key(self, draw: int) -> int:
        return _mix(self._key ^ ((draw + 1) * _DRAW_MUL & MASK64))

    def value(self, index: int, draw: int = 0) -> float:
        z = (self._draw_key(draw) + (index & MASK64) * GOLDEN) & MASK64
        z = _mix(_mix(z))
        return (z >> 11) * _SCALE

    def values(self, indices, draw=0) -> np.ndarray:
        """Vectorized :meth:`value`; ``draw`` may be a scalar or an array."""
        idx = np.asarray(indices, dtype=np.int64).view(np.uint64)
        if np.ndim(draw) == 0:
            key = np.uint64(self._draw_key(int(draw)))
        else:
            d = np.asarray(draw, dtype=np.int64).view(np.uint64)
            key = _mix_array(np.uint64(self._key) ^ ((d + np.uint64(1)) * np.uint64(_DRAW_MUL)))
        z = key + idx * np.uint64(GOLDEN)
        z = _mix_array(_mix_array(z))
        return (z >> np.uint64(11)).astype(np.float64) * _SCALE

    def range(self, lo: int, hi: int, draw: int = 0) -> np.ndarray:
        """Uniforms at indices ``lo..hi`` inclusive."""
        return self.values(np.arange(lo, hi + 1, dtype=np.int64), draw)


class FixedStream:
    """Stream backed by explicit values, for hand traces.

    Indices missing from ``table`` fall back to ``default`` (or to a
    :class:`UniformStream` when one is given).
    """

    def __init__(self, table: Mapping[int, float], default: float | UniformStream = 0.5,
                 stream_id: int = Z_CHAIN):
        self.table = dict(table)
        self.default = default
        self.stream_id = stream_id

    def _fallback(self, index: int, draw: int) -> float:
        if isinstance(self.default, UniformStream):
            return self.default.value(index, draw)
        return float(self.default)

    def value(self, index: int, draw: int = 0) -> float:
        if draw == 0 and index in self.table:
            return float(self.table[index])
        return self._fallback(index, draw)

    def values(self, indices, draw=0) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        draws = np.broadcast_to(np.asarray(draw, dtype=np.int64), idx.shape)
        return np.array([self.value(int(i), int(d)) for i, d in zip(idx.ravel(), draws.ravel())],
                        dtype=np.float64).reshape(idx.shape)

    def range(self, lo: int, hi: int, draw: int = 0) -> np.ndarray:
        return self.values(np.arange(lo, hi + 1, dtype=np.int64), draw)


class RecordingStream:
    """Wraps a stream and records every ``(index, draw)`` read."""

    def __init__(self, inner):
        self.inner = inner
        self.stream_id = inner.stream_id
        self.reads: set[tuple[int, int]] = set()

    def value(self, index: int, draw: int = 0) -> float:
        self.reads.add((int(index), int(draw)))
        return self.inner.value(index, draw)

    def values(self, indices, draw=0) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        draws = np.broadcast_to(np.asarray(draw, dtype=np.int64), idx.shape)
        self.reads.update(zip(idx.ravel().tolist(), draws.ravel().tolist()))
        return self.inner.values(indices, draw)

    def range(self, lo: int, hi: int, draw: int = 0) -> np.ndarray:
        return self.values(np.arange(lo, hi + 1, dtype=np.int64), draw)

    @property
    def indices(self) -> set[int]:
        return {i for i, _ in self.reads}


class PerturbedStream:
    """A stream equal to ``inner`` except at the indices in ``overrides``."""

    def __init__(self, inner, overrides: Mapping[int, float]):
        self.inner = inner
        self.stream_id = inner.stream_id
        self.overrides = dict(overrides)

    def value(self, index: int, draw: int = 0) -> float:
        if index in self.overrides:
            return self.overrides[index]
        return self.inner.value(index, draw)

    def values(self, indices, draw=0) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        out = np.array(self.inner.values(idx, draw), dtype=np.float64)
        for i, v in self.overrides.items():
            out[idx == i] = v
        return out

    def range(self, lo: int, hi: int, draw: int = 0) -> np.ndarray:
        return self.values(np.arange(lo, hi + 1, dtype=np.int64), draw)
