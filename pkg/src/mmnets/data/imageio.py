"""Image file formats: binary netpbm (P5/P6) and a raw float32 container.

P5/P6 quantize to 8 bits (round half up); the raw format is lossless:
16-byte header {magic "MMT0", u32 channels, u32 height, u32 width}, then
little-endian float32 data in channel-major order.
"""

from __future__ import annotations

import struct

import numpy as np

RAW_MAGIC = b"MMT0"


class ImageFormatError(ValueError):
    """Malformed image file; carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


def _quantize(values):
    return np.clip(np.floor(values * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    """P5 grayscale, 8-bit.  Accepts (h, w) or (1, h, w) floats in [0, 1]."""
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ImageFormatError(f"PGM needs 1 channel, got {img.shape[0]}")
        img = img[0]
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(img).tobytes())


def write_ppm(path, image):
    """P6 color, 8-bit.  Accepts (3, h, w) floats in [0, 1]."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ImageFormatError(f"PPM needs a (3, h, w) image, got {img.shape}")
    _, h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(img).transpose(1, 2, 0).tobytes())


def _read_netpbm(path, magic):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] != magic:
        raise ImageFormatError(
            f"expected {magic.decode()} magic, got {blob[:2]!r}", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":     # comment line
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        if not token.isdigit():
            raise ImageFormatError(f"bad header token {token!r}", offset=start)
        fields.append(int(token))
    pos += 1                                                  # single whitespace
    w, h, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 supported, got {maxval}", offset=2)
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    data = blob[pos:pos + need]
    if len(data) < need:
        raise ImageFormatError(
            f"truncated pixel data: need {need} bytes, have {len(data)}", offset=pos)
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 3:
        return arr.reshape(h, w, 3).transpose(2, 0, 1)
    return arr.reshape(1, h, w)


def read_pgm(path):
    return _read_netpbm(path, b"P5")


def read_ppm(path):
    return _read_netpbm(path, b"P6")


def write_raw(path, image):
    """Lossless float32 container for any (c, h, w) array."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3:
        raise ImageFormatError(f"raw container needs (c, h, w), got {img.shape}")
    c, h, w = img.shape
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<III", c, h, w))
        f.write(img.astype("<f4").tobytes())


def read_raw(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != RAW_MAGIC:
        raise ImageFormatError(f"bad magic {blob[:4]!r}", offset=0)
    if len(blob) < 16:
        raise ImageFormatError("truncated header", offset=len(blob))
    c, h, w = struct.unpack("<III", blob[4:16])
    need = 16 + 4 * c * h * w
    if len(blob) < need:
        raise ImageFormatError(
            f"truncated payload: need {need} bytes, have {len(blob)}", offset=len(blob))
    return np.frombuffer(blob[16:need], dtype="<f4").reshape(c, h, w).copy()


def load_image(path):
    """Dispatch on magic: raw f32, P6, or P5."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head[:4] == RAW_MAGIC:
        return read_raw(path)
    if head[:2] == b"P6":
        return read_ppm(path)
    if head[:2] == b"P5":
        return read_pgm(path)
    raise ImageFormatError(f"unrecognized image magic {head!r}", offset=0)
