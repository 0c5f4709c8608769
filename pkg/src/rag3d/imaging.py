"""Minimal PNG helpers.

The corpus ships tiny placeholder renders and several test fixtures need to
write or inspect image files; a hand-rolled encoder for solid-color RGB PNGs
keeps Pillow out of the dependency set.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_solid_png(path: str | Path, width: int, height: int, rgb: tuple[int, int, int]) -> Path:
    """Write a solid-color 8-bit RGB PNG of the given dimensions."""
    if width <= 0 or height <= 0:
        raise ValueError("png dimensions must be positive")
    row = b"\x00" + bytes(rgb) * width  # filter byte 0 per scanline
    raw = row * height
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    data = (
        _PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw))
        + _chunk(b"IEND", b"")
    )
    path = Path(path)
    path.write_bytes(data)
    return path


def png_dimensions(path: str | Path) -> tuple[int, int]:
    """Read (width, height) from a PNG header without decoding the image."""
    header = Path(path).read_bytes()[:24]
    if header[:8] != _PNG_SIGNATURE or header[12:16] != b"IHDR":
        raise ValueError(f"not a PNG file: {path}")
    width, height = struct.unpack(">II", header[16:24])
    return width, height
