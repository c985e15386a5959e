"""MSB-first bit packing used by the SEBF/SEBK wire formats."""

from __future__ import annotations


class BitWriter:
    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write_bits(self, value: int, width: int) -> None:
        """Append ``width`` bits of ``value``, most significant first."""
        if width < 0:
            raise ValueError("negative width")
        if width and value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        for shift in range(width - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._bytes.append(self._acc)
                self._acc = 0
                self._nbits = 0

    def write_bit_list(self, bits) -> None:
        for b in bits:
            self.write_bits(int(b) & 1, 1)

    def align(self) -> None:
        """Zero-pad to the next byte boundary."""
        if self._nbits:
            self._bytes.append(self._acc << (8 - self._nbits))
            self._acc = 0
            self._nbits = 0

    def getvalue(self) -> bytes:
        self.align()
        return bytes(self._bytes)

    @property
    def bit_length(self) -> int:
        return 8 * len(self._bytes) + self._nbits


class BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0  # bit position

    def read_bits(self, width: int) -> int:
        if self._pos + width > 8 * len(self._data):
            raise EOFError("bitstream exhausted")
        v = 0
        for _ in range(width):
            byte = self._data[self._pos >> 3]
            bit = (byte >> (7 - (self._pos & 7))) & 1
            v = (v << 1) | bit
            self._pos += 1
        return v

    def align(self) -> None:
        self._pos = (self._pos + 7) & ~7

    @property
    def bit_pos(self) -> int:
        return self._pos


def bits_of_bytes(data: bytes) -> list[int]:
    """Flatten bytes to a bit list, MSB-first."""
    out = []
    for byte in data:
        for shift in range(7, -1, -1):
            out.append((byte >> shift) & 1)
    return out


def bytes_of_bits(bits) -> bytes:
    """Pack a bit list MSB-first, zero-padding the final byte."""
    w = BitWriter()
    w.write_bit_list(bits)
    return w.getvalue()
