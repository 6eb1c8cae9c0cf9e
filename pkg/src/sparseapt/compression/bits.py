"""Bit-level writer/reader.  Multi-bit fields are written most significant bit first."""
from __future__ import annotations

import numpy as np


class BitWriter:
    def __init__(self):
        self._chunks: list[np.ndarray] = []
        self.nbits = 0

    def write_bits(self, bits: np.ndarray) -> None:
        bits = np.asarray(bits, dtype=np.uint8)
        self._chunks.append(bits)
        self.nbits += int(bits.size)

    def write_uint(self, value: int, width: int) -> None:
        if width == 0:
            if value:
                raise ValueError(f"value {value} needs a non-zero width")
            return
        if value < 0 or value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
        self.write_bits(((np.uint64(value) >> shifts) & np.uint64(1)).astype(np.uint8))

    def write_uints(self, values, width: int) -> None:
        """Many fixed-width unsigned fields at once."""
        v = np.asarray(values, dtype=np.uint64).ravel()
        if width == 0:
            if v.any():
                raise ValueError("non-zero values need a non-zero width")
            return
        if v.size and int(v.max()) >> width:
            raise ValueError(f"value {int(v.max())} does not fit in {width} bits")
        shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
        self.write_bits(((v[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8).ravel())

    def write_bytes(self, data: bytes) -> None:
        self.write_bits(np.unpackbits(np.frombuffer(data, dtype=np.uint8)))

    def pad_to_byte(self) -> int:
        pad = (-self.nbits) % 8
        if pad:
            self.write_bits(np.zeros(pad, dtype=np.uint8))
        return pad

    def getvalue(self) -> bytes:
        if self.nbits % 8:
            raise ValueError("stream is not byte aligned; call pad_to_byte first")
        if not self._chunks:
            return b""
        return np.packbits(np.concatenate(self._chunks)).tobytes()


class BitReader:
    def __init__(self, data: bytes | np.ndarray, nbits: int | None = None):
        if isinstance(data, (bytes, bytearray)):
            self.bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))
        else:
            self.bits = np.asarray(data, dtype=np.uint8)
        if nbits is not None:
            self.bits = self.bits[:nbits]
        self.pos = 0

    @property
    def remaining(self) -> int:
        return int(self.bits.size - self.pos)

    def read_bits(self, n: int) -> np.ndarray:
        if n > self.remaining:
            raise EOFError(f"need {n} bits, only {self.remaining} left")
        out = self.bits[self.pos:self.pos + n]
        self.pos += n
        return out

    def read_uint(self, width: int) -> int:
        value = 0
        for b in self.read_bits(width):
            value = (value << 1) | int(b)
        return value

    def read_uints(self, count: int, width: int) -> np.ndarray:
        if width == 0:
            return np.zeros(count, dtype=np.int64)
        bits = self.read_bits(count * width).reshape(count, width).astype(np.uint64)
        shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
        return (bits << shifts[None, :]).sum(axis=1).astype(np.int64)

    def read_bytes(self, n: int) -> bytes:
        return np.packbits(self.read_bits(8 * n)).tobytes()
