"""Segment-packed quantization codes.

Per-vector codes with non-uniform widths are laid out MSB-first in one
contiguous bitstream and cut into fixed S-bit segments, so a vector costs
ceil(b / S) memory words instead of one word per dimension. A code whose
width exceeds S simply spans segments; a zero-width dimension occupies no
bits at all.

The one-bit sign sketch used for Hamming pruning is the same structure
with every width forced to 1, so it reuses pack/extract unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError
from .quantizer import BitAllocation

_SEGMENT_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}


def segment_dtype(segment_bits: int):
    try:
        return _SEGMENT_DTYPES[segment_bits]
    except KeyError:
        raise CapacityError("segment width must be 8, 16, 32 or 64 bits") from None


@dataclass
class SegmentMatrix:
    """n rows of ceil(b / S) packed segments."""

    segments: np.ndarray
    segment_bits: int
    bit_budget: int

    @property
    def n(self) -> int:
        return self.segments.shape[0]

    @property
    def segment_count(self) -> int:
        return self.segments.shape[1]

    @property
    def padding_bits(self) -> int:
        return self.segment_count * self.segment_bits - self.bit_budget


def _mask(width: int) -> np.uint64:
    return np.uint64((1 << width) - 1)


def pack_codes(codes: np.ndarray, alloc: BitAllocation) -> SegmentMatrix:
    """Pack per-dimension codes into shared segments, MSB-first.

    codes: (n, d) non-negative integers with codes[:, j] < 2**bits[j].
    """
    codes = np.atleast_2d(np.asarray(codes))
    n, d = codes.shape
    if d != alloc.dim:
        raise CapacityError("code width does not match the bit allocation")
    s = alloc.segment_bits
    b = alloc.budget
    g = alloc.segments
    limits = alloc.cells
    for j in range(d):
        col = codes[:, j]
        if col.min(initial=0) < 0 or col.max(initial=0) >= limits[j]:
            raise CapacityError(
                f"dimension {j}: codes exceed {int(alloc.bits[j])} bits"
            )
    out = np.zeros((n, g), dtype=np.uint64)
    starts = np.concatenate(([0], np.cumsum(alloc.bits)))
    for j in range(d):
        width = int(alloc.bits[j])
        if width == 0:
            continue
        col = codes[:, j].astype(np.uint64)
        consumed = 0
        while consumed < width:
            pos = int(starts[j]) + consumed
            seg, off = divmod(pos, s)
            take = min(s - off, width - consumed)
            remaining = width - consumed - take
            chunk = (col >> np.uint64(remaining)) & _mask(take)
            out[:, seg] |= chunk << np.uint64(s - off - take)
            consumed += take
    return SegmentMatrix(out.astype(segment_dtype(s)), s, b)


def extract_dim(
    matrix: SegmentMatrix,
    alloc: BitAllocation,
    dim: int,
    rows: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Recover the codes of one dimension, touching only its segments.

    rows may be an index array or boolean mask selecting a subset.
    """
    if not 0 <= dim < alloc.dim:
        raise CapacityError(f"dimension {dim} out of range")
    width = int(alloc.bits[dim])
    segs = matrix.segments if rows is None else matrix.segments[rows]
    if width == 0:
        return np.zeros(segs.shape[0], dtype=np.int64)
    s = matrix.segment_bits
    start = int(alloc.bits[:dim].sum())
    out = np.zeros(segs.shape[0], dtype=np.uint64)
    consumed = 0
    while consumed < width:
        pos = start + consumed
        seg, off = divmod(pos, s)
        take = min(s - off, width - consumed)
        remaining = width - consumed - take
        chunk = (segs[:, seg].astype(np.uint64) >> np.uint64(s - off - take)) & _mask(take)
        out |= chunk << np.uint64(remaining)
        consumed += take
    return out.astype(np.int64)


def bit_wastage(alloc: BitAllocation, scheme: str = "segmented") -> int:
    """Padding bits per vector under either layout.

    "word": one S-bit word per dimension, so each dimension wastes
    S - bits[j]; requires every width to fit one word.
    "segmented": one shared bitstream, wasting only the tail of the
    final segment.
    """
    s = alloc.segment_bits
    if scheme == "word":
        if np.any(alloc.bits > s):
            raise CapacityError("word layout cannot hold codes wider than a segment")
        return int((s - alloc.bits).sum())
    if scheme == "segmented":
        return alloc.segments * s - alloc.budget
    raise CapacityError(f"unknown layout {scheme!r}")


def sign_allocation(dim: int, segment_bits: int = 8) -> BitAllocation:
    return BitAllocation(np.ones(dim, dtype=np.int64), segment_bits)


def pack_signs(standardized: np.ndarray, segment_bits: int = 8) -> SegmentMatrix:
    """One bit per dimension: 1 where the standardized value is above zero."""
    x = np.atleast_2d(np.asarray(standardized))
    bits = (x > 0).astype(np.int64)
    return pack_codes(bits, sign_allocation(x.shape[1], segment_bits))


def _tail_mask(segment_bits: int, padding_bits: int) -> Optional[int]:
    if padding_bits == 0:
        return None
    live = segment_bits - padding_bits
    return ((1 << live) - 1) << padding_bits


def hamming_distance(x: np.ndarray, y: np.ndarray, bit_count: int) -> int:
    """Bit disagreement between two packed rows; padding bits are ignored."""
    x = np.asarray(x)
    y = np.asarray(y)
    s = x.dtype.itemsize * 8
    xor = (x ^ y).astype(np.uint64)
    tail = _tail_mask(s, x.size * s - bit_count)
    if tail is not None:
        xor[-1] &= np.uint64(tail)
    return int(np.bitwise_count(xor).sum())


def hamming_to_row(
    matrix: SegmentMatrix, query_row: np.ndarray, rows: Optional[np.ndarray] = None
) -> np.ndarray:
    """Hamming distance from every selected row to one packed query row."""
    segs = matrix.segments if rows is None else matrix.segments[rows]
    xor = segs ^ np.asarray(query_row, dtype=matrix.segments.dtype)
    tail = _tail_mask(matrix.segment_bits, matrix.padding_bits)
    if tail is not None:
        xor[:, -1] &= np.asarray(tail, dtype=matrix.segments.dtype)
    return np.bitwise_count(xor).sum(axis=1, dtype=np.int64)
