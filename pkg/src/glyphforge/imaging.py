"""Deterministic raster IO.

PNG writing is done by hand (fixed zlib settings, no filters) so identical
pixel arrays always produce identical bytes; Pillow's encoder settings can
drift between versions. Reading goes through Pillow, which handles arbitrary
third-party PNGs. PGM (P5) is used for bit-exact grayscale fixtures.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np
from PIL import Image


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode a (H,W) grayscale or (H,W,3) RGB uint8 array as PNG bytes."""
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    if arr.ndim == 2:
        color_type = 0
        h, w = arr.shape
        raw = arr
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
        h, w = arr.shape[:2]
        raw = arr.reshape(h, -1)
    else:
        raise ValueError(f"unsupported pixel shape {arr.shape}")
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    # filter byte 0 per scanline, single fixed-level deflate stream
    scanlines = b"".join(b"\x00" + raw[y].tobytes() for y in range(h))
    idat = zlib.compress(scanlines, 6)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", idat)
        + _chunk(b"IEND", b"")
    )


def write_png(path, pixels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(pixels))


def read_png(path_or_bytes) -> np.ndarray:
    """Read a PNG into a uint8 array: (H,W) for grayscale, (H,W,3) for color."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        import io

        img = Image.open(io.BytesIO(path_or_bytes))
    else:
        img = Image.open(path_or_bytes)
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_pgm(path, pixels: np.ndarray) -> None:
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM requires a 2-D grayscale array")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError("not a raw PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    return np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w).copy()
