"""Framed file format for one compressed image.

Little-endian layout:

    magic "GMC1" | version u8 | k u8 | n u16 | width u32 | height u32
    | ceil(n/8) flag bytes | hyper_len u32 | hyper payload
    | main_len u32 | main payload | crc32 u32

Width and height are the original image dimensions before any padding.
Flag bit j (byte j//8, bit j%8, least significant bit first) marks latent
channel j as all-zero: it carries no symbols in the main payload. The CRC
is zlib.crc32 over every preceding byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStream, InvalidInput, UnsupportedVersion

CONTAINER_MAGIC = b"GMC1"
CONTAINER_VERSION = 1

_HEADER = struct.Struct("<4sBBHII")


@dataclass(frozen=True)
class BitstreamContainer:
    """One encoded image: geometry, channel skip flags, and both payloads."""

    k: int
    n: int
    width: int
    height: int
    skip_flags: np.ndarray
    hyper_payload: bytes
    main_payload: bytes

    def __post_init__(self):
        flags = np.asarray(self.skip_flags, dtype=bool)
        if flags.shape != (self.n,):
            raise InvalidInput(f"need {self.n} skip flags, got shape {flags.shape}")
        if not (1 <= self.k <= 255 and 1 <= self.n <= 65535):
            raise InvalidInput(f"k={self.k}, n={self.n} out of header range")
        if self.width < 1 or self.height < 1:
            raise InvalidInput("image dimensions must be positive")
        object.__setattr__(self, "skip_flags", flags)

    def serialize(self) -> bytes:
        out = bytearray()
        out += _HEADER.pack(
            CONTAINER_MAGIC, CONTAINER_VERSION, self.k, self.n, self.width, self.height
        )
        out += np.packbits(self.skip_flags, bitorder="little").tobytes()
        for payload in (self.hyper_payload, self.main_payload):
            out += struct.pack("<I", len(payload))
            out += payload
        out += struct.pack("<I", zlib.crc32(bytes(out)))
        return bytes(out)

    @classmethod
    def parse(cls, data: bytes) -> "BitstreamContainer":
        if len(data) < _HEADER.size + 4:
            raise CorruptStream("container shorter than its fixed header")
        magic, version, k, n, width, height = _HEADER.unpack_from(data, 0)
        if magic != CONTAINER_MAGIC:
            raise CorruptStream(f"bad magic {magic!r}")
        if version != CONTAINER_VERSION:
            raise UnsupportedVersion(f"container version {version}, expected {CONTAINER_VERSION}")
        pos = _HEADER.size
        flag_len = (n + 7) // 8

        def take(count, what):
            nonlocal pos
            if pos + count > len(data) - 4:
                raise CorruptStream(f"container truncated inside {what}")
            chunk = data[pos : pos + count]
            pos += count
            return chunk

        flag_bytes = take(flag_len, "channel flags")
        flags = np.unpackbits(
            np.frombuffer(flag_bytes, dtype=np.uint8), count=n, bitorder="little"
        ).astype(bool)
        (hyper_len,) = struct.unpack("<I", take(4, "hyper length"))
        hyper = bytes(take(hyper_len, "hyper payload"))
        (main_len,) = struct.unpack("<I", take(4, "main length"))
        main = bytes(take(main_len, "main payload"))
        if pos != len(data) - 4:
            raise CorruptStream(f"{len(data) - 4 - pos} trailing bytes before checksum")
        (crc_stored,) = struct.unpack("<I", data[-4:])
        if zlib.crc32(data[:-4]) != crc_stored:
            raise CorruptStream("checksum mismatch")
        try:
            return cls(k, n, width, height, flags, hyper, main)
        except InvalidInput as exc:
            raise CorruptStream(str(exc)) from exc

    @property
    def total_bytes(self) -> int:
        return (
            _HEADER.size + (self.n + 7) // 8 + 8
            + len(self.hyper_payload) + len(self.main_payload) + 4
        )
