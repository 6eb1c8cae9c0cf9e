"""Canonical Huffman codes over small integer alphabets.

Only the code lengths are needed to rebuild a canonical code: symbols are
sorted by (length, symbol) and receive consecutive code values.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .bits import BitReader, BitWriter


@dataclass(frozen=True)
class HuffmanTable:
    lengths: dict[int, int]  # symbol -> code length (symbols with count 0 are absent)
    codes: dict[int, int]

    @classmethod
    def from_lengths(cls, lengths: dict[int, int]) -> HuffmanTable:
        lengths = {int(s): int(l) for s, l in lengths.items() if l > 0}
        if not lengths:
            raise ValueError("a code table needs at least one symbol")
        codes = {}
        code = 0
        prev = 0
        for sym, length in sorted(lengths.items(), key=lambda t: (t[1], t[0])):
            code <<= length - prev
            codes[sym] = code
            code += 1
            prev = length
        return cls(lengths, codes)

    @property
    def max_length(self) -> int:
        return max(self.lengths.values())

    def encoded_bits(self, stream) -> int:
        s = np.asarray(stream, dtype=np.int64)
        if s.size == 0:
            return 0
        syms, counts = np.unique(s, return_counts=True)
        return int(sum(self.lengths[int(a)] * int(c) for a, c in zip(syms, counts)))


def huffman_lengths(frequencies: dict[int, int]) -> dict[int, int]:
    """Optimal prefix-code lengths; ties are broken by symbol so results are deterministic."""
    items = sorted((int(s), int(c)) for s, c in frequencies.items() if c > 0)
    if not items:
        raise ValueError("all frequencies are zero")
    if len(items) == 1:
        return {items[0][0]: 1}
    # heap entries: (weight, tiebreak, symbols-in-subtree)
    heap = [(c, s, [s]) for s, c in items]
    heapq.heapify(heap)
    depth = {s: 0 for s, _ in items}
    counter = max(s for s, _ in items) + 1
    while len(heap) > 1:
        w1, _, a = heapq.heappop(heap)
        w2, _, b = heapq.heappop(heap)
        for s in a:
            depth[s] += 1
        for s in b:
            depth[s] += 1
        heapq.heappush(heap, (w1 + w2, counter, a + b))
        counter += 1
    return depth


def huffman_build(frequencies) -> HuffmanTable:
    if not isinstance(frequencies, dict):
        syms, counts = np.unique(np.asarray(frequencies, dtype=np.int64), return_counts=True)
        frequencies = dict(zip(syms.tolist(), counts.tolist()))
    return HuffmanTable.from_lengths(huffman_lengths(frequencies))


def huffman_encode(stream, table: HuffmanTable, writer: BitWriter | None = None) -> BitWriter:
    writer = BitWriter() if writer is None else writer
    s = np.asarray(stream, dtype=np.int64).ravel()
    if s.size == 0:
        return writer
    syms = np.unique(s)
    missing = [int(x) for x in syms if int(x) not in table.lengths]
    if missing:
        raise KeyError(f"symbol {missing[0]} has no code")
    lut_len = np.zeros(int(syms.max()) + 1, dtype=np.int64)
    lut_code = np.zeros(int(syms.max()) + 1, dtype=np.uint64)
    for x in syms:
        lut_len[x] = table.lengths[int(x)]
        lut_code[x] = table.codes[int(x)]
    lens = lut_len[s]
    codes = lut_code[s]
    # bit j (0 = most significant) of each code, flattened in stream order
    owner = np.repeat(np.arange(s.size), lens)
    starts = np.cumsum(lens) - lens
    j = np.arange(owner.size) - starts[owner]
    shift = (lens[owner] - 1 - j).astype(np.uint64)
    writer.write_bits(((codes[owner] >> shift) & np.uint64(1)).astype(np.uint8))
    return writer


def huffman_decode(reader: BitReader, table: HuffmanTable, count: int) -> np.ndarray:
    """Read ``count`` symbols; raises EOFError on a truncated stream."""
    max_len = table.max_length
    # canonical decoding: first code and symbol list per length
    by_len: dict[int, list[int]] = {}
    for sym, length in sorted(table.lengths.items(), key=lambda t: (t[1], t[0])):
        by_len.setdefault(length, []).append(sym)
    first = {}
    code = 0
    prev = 0
    for length in sorted(by_len):
        code <<= length - prev
        first[length] = code
        code += len(by_len[length])
        prev = length
    out = np.empty(count, dtype=np.int64)
    bits = reader.bits
    pos = reader.pos
    n = bits.size
    for i in range(count):
        code = 0
        length = 0
        while True:
            if pos >= n:
                raise EOFError(f"bitstream truncated after {i} of {count} symbols")
            code = (code << 1) | int(bits[pos])
            pos += 1
            length += 1
            syms = by_len.get(length)
            if syms is not None and 0 <= code - first[length] < len(syms):
                out[i] = syms[code - first[length]]
                break
            if length >= max_len:
                raise ValueError(f"invalid code in bitstream at symbol {i}")
    reader.pos = pos
    return out


def table_bits(alphabet_size: int, table: HuffmanTable) -> tuple[int, int]:
    """(width of one length field, total bits) for storing a table as lengths."""
    width = max(1, int(table.max_length).bit_length())
    return width, 8 + alphabet_size * width


def write_table(writer: BitWriter, table: HuffmanTable, alphabet_size: int) -> None:
    width, _ = table_bits(alphabet_size, table)
    writer.write_uint(width, 8)
    writer.write_uints([table.lengths.get(s, 0) for s in range(alphabet_size)], width)


def read_table(reader: BitReader, alphabet_size: int) -> HuffmanTable:
    width = reader.read_uint(8)
    lengths = reader.read_uints(alphabet_size, width)
    return HuffmanTable.from_lengths({s: int(l) for s, l in enumerate(lengths) if l > 0})
