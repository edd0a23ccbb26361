"""Little-endian binary readers/writers shared by the artifact file formats."""

from __future__ import annotations

import struct

import numpy as np

from .errors import CorruptFile

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash, used for n-gram bucketing and artifact fingerprints."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class Reader:
    """Bounds-checked cursor over a byte buffer; raises CorruptFile on truncation."""

    def __init__(self, data: bytes, label: str = "file"):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFile(
                f"{self.label}: truncated at byte {self.pos} (needed {n} more)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise CorruptFile(f"{self.label}: bad magic {got!r}, expected {magic!r}")

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32_array(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").copy()

    def string(self) -> str:
        n = self.u16()
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFile(f"{self.label}: invalid UTF-8 at byte {self.pos}") from exc

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CorruptFile(
                f"{self.label}: {len(self.data) - self.pos} trailing bytes"
            )


class Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self.parts.append(data)

    def u8(self, v: int) -> None:
        self.parts.append(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self.parts.append(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self.parts.append(struct.pack("<Q", v))

    def f32_array(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    def string(self, s: str) -> None:
        raw = s.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"string too long to serialize ({len(raw)} bytes)")
        self.u16(len(raw))
        self.raw(raw)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)
