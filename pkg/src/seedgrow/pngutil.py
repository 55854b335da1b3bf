"""Minimal 8-bit grayscale PNG encode/decode (stdlib zlib only).

Enough for serving slice images and for tests to read them back; the
decoder only accepts what the encoder produces (bit depth 8, colour
type 0, filter 0).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import DataError

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def encode_gray_png(image: np.ndarray) -> bytes:
    """Encode a (rows, cols) uint8 array as a grayscale PNG."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DataError(f"PNG image must be 2D, got shape {arr.shape}")
    arr = arr.astype(np.uint8)
    rows, cols = arr.shape
    ihdr = struct.pack(">IIBBBBB", cols, rows, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + arr[r].tobytes() for r in range(rows))
    return (_SIGNATURE
            + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw, 6))
            + _chunk(b"IEND", b""))


def decode_gray_png(data: bytes) -> np.ndarray:
    """Decode a PNG produced by encode_gray_png back to (rows, cols) uint8."""
    if not data.startswith(_SIGNATURE):
        raise DataError("not a PNG stream")
    pos = len(_SIGNATURE)
    width = height = None
    idat = b""
    while pos + 8 <= len(data):
        length, tag = struct.unpack(">I4s", data[pos: pos + 8])
        payload = data[pos + 8: pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, ctype = struct.unpack(">IIBB", payload[:10])
            if depth != 8 or ctype != 0:
                raise DataError("only 8-bit grayscale PNG supported")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if width is None:
        raise DataError("PNG missing IHDR")
    raw = zlib.decompress(idat)
    stride = width + 1
    if len(raw) != stride * height:
        raise DataError("PNG payload size mismatch")
    out = np.empty((height, width), dtype=np.uint8)
    for r in range(height):
        row = raw[r * stride: (r + 1) * stride]
        if row[0] != 0:
            raise DataError(f"unsupported PNG filter {row[0]}")
        out[r] = np.frombuffer(row[1:], dtype=np.uint8)
    return out
