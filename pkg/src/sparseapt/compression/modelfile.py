"""Binary model files and exact bit accounting.

Layout (all sections back to back, one bitstream, padded to a byte at the end)::

    header      magic b"SAPT", version u8, kind u8, flags u8, b u8
    spec        n_dims u8, dims u32 each; K u32, zero cluster id u32
                (0xFFFFFFFF = none), offset bits u8
    -- kind DENSE (float64 checkpoint) --
    values      N float64, little-endian bytes
    -- kind INDEX / SPARSE --
    codebook      K fields of b bits (IEEE bit pattern)
    free_values   untied parameters, b bits each (only when biases are untied)
    index_table   u8 field width w, then K code lengths of w bits
    -- kind INDEX --
    index_stream  Huffman codes of every tied parameter's cluster id
    -- kind SPARSE --
    offset_table  as index_table over 2**p offsets (absent when offsets are raw)
    layer_counts  stored entries per tied matrix, u32 each
    row_pointers  per matrix rows+1 pointers of ceil(log2(count+1)) bits
    index_stream  Huffman codes of the stored entries' cluster ids
    offset_stream Huffman codes (or raw p-bit fields) of the relative offsets
    padding       zero bits up to the next byte

Header and spec are byte aligned and little-endian; everything after is
bit-packed with multi-bit fields written most significant bit first.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..nn import NetworkSpec, ParamVector
from .bits import BitReader, BitWriter
from .huffman import HuffmanTable, huffman_build, huffman_decode, huffman_encode, read_table, write_table
from .packing import CSRBlock, PackedModel, prune_and_pack, tied_segments, unpack_block
from .quantize import QuantizedModel, bits_to_float, float_bits, tied_mask

MAGIC = b"SAPT"
VERSION = 1
KIND_DENSE, KIND_INDEX, KIND_SPARSE = 0, 1, 2
FLAG_BIAS, FLAG_TIE_BIASES, FLAG_HUFFMAN_OFFSETS, FLAG_ZERO_CLUSTER = 1, 2, 4, 8
NO_ZERO = 0xFFFFFFFF

PAYLOAD_ITEMS = (
    "codebook",
    "free_values",
    "index_table",
    "offset_table",
    "layer_counts",
    "row_pointers",
    "index_stream",
    "offset_stream",
)


@dataclass
class EncodedModel:
    data: bytes
    items: dict[str, int]  # section name -> bits, in file order
    kind: int
    spec: NetworkSpec
    b: int
    packed: PackedModel | None = None
    extra: dict = field(default_factory=dict)

    @property
    def total_bits(self) -> int:
        return sum(self.items.values())

    @property
    def payload_bits(self) -> int:
        return sum(v for k, v in self.items.items() if k in PAYLOAD_ITEMS)


def _write_header(w: BitWriter, kind: int, flags: int, b: int, spec: NetworkSpec, k: int, zero, p: int, items):
    start = w.nbits
    w.write_bytes(MAGIC + struct.pack("<BBBB", VERSION, kind, flags, b))
    items["header"] = w.nbits - start
    start = w.nbits
    dims = spec.layer_dims
    w.write_bytes(struct.pack("<B", len(dims)) + struct.pack(f"<{len(dims)}I", *dims))
    w.write_bytes(struct.pack("<IIB", k, NO_ZERO if zero is None else zero, p))
    items["spec"] = w.nbits - start


def _section(w: BitWriter, items: dict, name: str):
    class _S:
        def __enter__(self):
            self.start = w.nbits

        def __exit__(self, *exc):
            if exc[0] is None:
                items[name] = items.get(name, 0) + w.nbits - self.start

    return _S()


def encode_dense(params: ParamVector, k: int = 0, zero_cluster: bool = False, tie_biases: bool = True) -> EncodedModel:
    """Lossless float64 checkpoint (used for soft-phase and untied models)."""
    spec = params.spec
    flags = (FLAG_BIAS if spec.include_bias else 0) | (FLAG_TIE_BIASES if tie_biases else 0)
    flags |= FLAG_ZERO_CLUSTER if zero_cluster else 0
    w = BitWriter()
    items: dict[str, int] = {}
    _write_header(w, KIND_DENSE, flags, 64, spec, k, None, 0, items)
    with _section(w, items, "values"):
        w.write_bytes(np.asarray(params.values, dtype="<f8").tobytes())
    items["padding"] = w.pad_to_byte()
    return EncodedModel(w.getvalue(), items, KIND_DENSE, spec, 64, extra={"k": k, "zero_cluster": zero_cluster,
                                                                          "tie_biases": tie_biases})


def encode(q: QuantizedModel, zero_cluster_id: int | None, offset_bits: int = 8, huffman_offsets: bool = True) -> EncodedModel:
    """quantize -> prune_and_pack -> Huffman, serialized with itemized bit counts."""
    packed = prune_and_pack(q, zero_cluster_id, offset_bits)
    spec = q.spec
    kind = KIND_SPARSE if packed.sparse else KIND_INDEX
    flags = (FLAG_BIAS if spec.include_bias else 0) | (FLAG_TIE_BIASES if q.tie_biases else 0)
    flags |= FLAG_HUFFMAN_OFFSETS if huffman_offsets else 0
    w = BitWriter()
    items: dict[str, int] = {}
    _write_header(w, kind, flags, q.b, spec, q.k, zero_cluster_id, offset_bits, items)

    with _section(w, items, "codebook"):
        w.write_uints(float_bits(q.codebook, q.b), q.b)
    with _section(w, items, "free_values"):
        w.write_uints(float_bits(q.free_values, q.b), q.b)

    stream = packed.index_stream()
    # an empty stream still gets a (one-symbol) table so the file is self-describing
    index_table = huffman_build(stream) if stream.size else HuffmanTable.from_lengths({0: 1})
    with _section(w, items, "index_table"):
        write_table(w, index_table, q.k)

    if kind == KIND_INDEX:
        with _section(w, items, "index_stream"):
            huffman_encode(stream, index_table, w)
    else:
        offsets = packed.offset_stream()
        n_off = 1 << offset_bits
        offset_table = None
        if huffman_offsets:
            offset_table = huffman_build(offsets) if offsets.size else HuffmanTable.from_lengths({0: 1})
            with _section(w, items, "offset_table"):
                write_table(w, offset_table, n_off)
        with _section(w, items, "layer_counts"):
            w.write_uints([blk.n_stored for blk in packed.blocks], 32)
        with _section(w, items, "row_pointers"):
            for blk in packed.blocks:
                w.write_uints(blk.row_ptr, int(blk.n_stored).bit_length())
        with _section(w, items, "index_stream"):
            huffman_encode(stream, index_table, w)
        with _section(w, items, "offset_stream"):
            if offset_table is not None:
                huffman_encode(offsets, offset_table, w)
            else:
                w.write_uints(offsets, offset_bits)
    items["padding"] = w.pad_to_byte()
    return EncodedModel(w.getvalue(), items, kind, spec, q.b, packed=packed)


@dataclass
class DecodedModel:
    kind: int
    spec: NetworkSpec
    b: int
    k: int
    zero_cluster_id: int | None
    offset_bits: int
    flags: int
    params: ParamVector
    quantized: QuantizedModel | None = None

    @property
    def tie_biases(self) -> bool:
        return bool(self.flags & FLAG_TIE_BIASES)

    @property
    def zero_cluster_flag(self) -> bool:
        return bool(self.flags & FLAG_ZERO_CLUSTER)


def decode(data: bytes) -> DecodedModel:
    """Parse any model file back into parameters.  Raises ValueError on corruption."""
    try:
        return _decode(data)
    except (EOFError, struct.error) as exc:
        raise ValueError(f"corrupted model file: {exc}") from exc


def _decode(data: bytes) -> DecodedModel:
    if data[:4] != MAGIC:
        raise ValueError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, kind, flags, b = struct.unpack_from("<BBBB", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    n_dims = data[8]
    dims = struct.unpack_from(f"<{n_dims}I", data, 9)
    pos = 9 + 4 * n_dims
    k, zero, p = struct.unpack_from("<IIB", data, pos)
    pos += 9
    zero = None if zero == NO_ZERO else zero
    spec = NetworkSpec(tuple(dims), include_bias=bool(flags & FLAG_BIAS))

    if kind == KIND_DENSE:
        n = spec.n_params
        if len(data) < pos + 8 * n:
            raise ValueError("corrupted model file: values truncated")
        values = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
        return DecodedModel(kind, spec, b, k, None, p, flags, ParamVector(spec, values))
    if kind not in (KIND_INDEX, KIND_SPARSE):
        raise ValueError(f"unknown model kind {kind}")
    if b not in (16, 32):
        raise ValueError(f"unsupported storage width {b}")

    tie_biases = bool(flags & FLAG_TIE_BIASES)
    mask = tied_mask(spec, tie_biases)
    r = BitReader(data)
    r.pos = 8 * pos
    codebook = bits_to_float(r.read_uints(k, b), b)
    free = bits_to_float(r.read_uints(int((~mask).sum()), b), b)
    index_table = read_table(r, k)
    n_tied = int(mask.sum())
    q_stub = QuantizedModel(spec, b, codebook, np.zeros(n_tied, dtype=np.int64), tie_biases, free)

    if kind == KIND_INDEX:
        indices = huffman_decode(r, index_table, n_tied)
    else:
        if zero is None or zero >= k:
            raise ValueError("corrupted model file: sparse model without a valid zero cluster")
        offset_table = read_table(r, 1 << p) if flags & FLAG_HUFFMAN_OFFSETS else None
        segs = tied_segments(q_stub)
        counts = r.read_uints(len(segs), 32)
        row_ptrs = []
        for seg, cnt in zip(segs, counts):
            rows = seg.shape[0] if len(seg.shape) == 2 else 1
            ptr = r.read_uints(rows + 1, int(cnt).bit_length())
            if ptr[-1] != cnt or np.any(np.diff(ptr) < 0):
                raise ValueError("corrupted model file: bad row pointers")
            row_ptrs.append(ptr)
        total = int(counts.sum())
        stored_ids = huffman_decode(r, index_table, total)
        if offset_table is not None:
            offsets = huffman_decode(r, offset_table, total)
        else:
            offsets = r.read_uints(total, p)
        parts = []
        at = 0
        for seg, cnt, ptr in zip(segs, counts, row_ptrs):
            blk = CSRBlock(seg, ptr, offsets[at:at + cnt], stored_ids[at:at + cnt])
            parts.append(unpack_block(blk, zero))
            at += int(cnt)
        indices = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    if np.any(r.bits[r.pos:]):
        raise ValueError("corrupted model file: trailing data")
    q = QuantizedModel(spec, b, codebook, indices, tie_biases, free)
    return DecodedModel(kind, spec, b, k, zero, p, flags, q.dequantize(), q)


def reconstruct(model) -> ParamVector:
    """Parameters from a QuantizedModel, EncodedModel or raw file bytes."""
    if isinstance(model, QuantizedModel):
        return model.dequantize()
    if isinstance(model, EncodedModel):
        model = model.data
    return decode(bytes(model)).params


def max_compression_rate(encoded: EncodedModel, b: int = 32) -> float:
    """Dense size (N * b bits) over the whole serialized file, header included."""
    return encoded.spec.n_params * b / encoded.total_bits


def payload_compression_rate(encoded: EncodedModel, b: int = 32) -> float:
    """As max_compression_rate but without header, spec block and padding."""
    return encoded.spec.n_params * b / encoded.payload_bits


def accounting(encoded: EncodedModel) -> list[tuple[str, int]]:
    """(section, bits) in file order; sums to 8 * len(encoded.data)."""
    return list(encoded.items.items())


def compression_rate(n: int, b: int, k: int) -> float:
    """N b / (N log2 K + K b): index stream plus a full-precision codebook."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    return float(n * b / (n * np.log2(k) + k * b))


def write_model(path, encoded: EncodedModel) -> None:
    Path(path).write_bytes(encoded.data)


def read_model(path) -> DecodedModel:
    return decode(Path(path).read_bytes())
