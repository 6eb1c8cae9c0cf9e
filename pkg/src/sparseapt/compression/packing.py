"""CSR layout of the cluster-index stream with relative column offsets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Segment
from .quantize import QuantizedModel


@dataclass
class CSRBlock:
    segment: Segment
    row_ptr: np.ndarray  # rows + 1 entries, counts include fillers
    offsets: np.ndarray  # one per stored entry
    indices: np.ndarray  # cluster id per stored entry (fillers carry the zero id)

    @property
    def shape(self) -> tuple[int, int]:
        s = self.segment.shape
        return (s[0], s[1]) if len(s) == 2 else (1, s[0])

    @property
    def n_stored(self) -> int:
        return int(self.indices.size)


@dataclass
class PackedModel:
    quantized: QuantizedModel
    zero_cluster_id: int | None
    offset_bits: int
    blocks: list[CSRBlock]

    @property
    def sparse(self) -> bool:
        return self.zero_cluster_id is not None

    def index_stream(self) -> np.ndarray:
        if not self.sparse:
            return self.quantized.indices
        if not self.blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([b.indices for b in self.blocks])

    def offset_stream(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([b.offsets for b in self.blocks])


def tied_segments(q: QuantizedModel) -> list[Segment]:
    return [s for s in q.spec.layout if s.kind == "W" or q.tie_biases]


def _pack_matrix(ids: np.ndarray, zero: int, max_off: int) -> tuple[np.ndarray, list[int], list[int]]:
    rows = ids.shape[0]
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    offsets: list[int] = []
    indices: list[int] = []
    for r in range(rows):
        prev = 0
        for c in np.flatnonzero(ids[r] != zero):
            c = int(c)
            gap = c - prev
            while gap > max_off:
                offsets.append(max_off)
                indices.append(zero)
                prev += max_off
                gap -= max_off
            offsets.append(gap)
            indices.append(int(ids[r, c]))
            prev = c
        row_ptr[r + 1] = len(offsets)
    return row_ptr, offsets, indices


def prune_and_pack(q: QuantizedModel, zero_cluster_id: int | None, offset_bits: int = 8) -> PackedModel:
    """Drop zero-cluster entries and lay the rest out as per-matrix CSR.

    Column positions are stored relative to the previous stored entry of the
    row (the first one relative to column 0).  A gap that does not fit in
    ``offset_bits`` is bridged by filler entries of the largest offset that
    carry the zero cluster id.  ``zero_cluster_id=None`` keeps the dense
    index stream and packs nothing.
    """
    if offset_bits < 1:
        raise ValueError("offset_bits must be >= 1")
    if zero_cluster_id is None:
        return PackedModel(q, None, offset_bits, [])
    if not 0 <= zero_cluster_id < q.k:
        raise ValueError(f"zero cluster {zero_cluster_id} outside codebook of size {q.k}")
    max_off = (1 << offset_bits) - 1
    blocks = []
    pos = 0
    for seg in tied_segments(q):
        ids = q.indices[pos:pos + seg.size]
        pos += seg.size
        mat = ids.reshape(seg.shape) if len(seg.shape) == 2 else ids.reshape(1, -1)
        row_ptr, offs, idx = _pack_matrix(mat, zero_cluster_id, max_off)
        blocks.append(CSRBlock(seg, row_ptr, np.array(offs, dtype=np.int64), np.array(idx, dtype=np.int64)))
    return PackedModel(q, zero_cluster_id, offset_bits, blocks)


def unpack_block(block: CSRBlock, zero: int) -> np.ndarray:
    """Dense cluster-id matrix (flattened) from one CSR block."""
    rows, cols = block.shape
    out = np.full((rows, cols), zero, dtype=np.int64)
    for r in range(rows):
        lo, hi = int(block.row_ptr[r]), int(block.row_ptr[r + 1])
        prev = 0
        for e in range(lo, hi):
            col = prev + int(block.offsets[e])
            if col >= cols:
                raise ValueError(f"corrupted stream: column {col} outside row of width {cols}")
            if block.indices[e] != zero:
                out[r, col] = block.indices[e]
            prev = col
    return out.ravel()
