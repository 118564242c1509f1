"""Binary PGM (P5) read/write, 8-bit and 16-bit big-endian."""

from __future__ import annotations

import numpy as np


def encode_pgm(image: np.ndarray, maxval: int = 255) -> bytes:
    """Encode a 2D array as binary PGM. 16-bit values are big-endian per the format."""
    if image.ndim != 2:
        raise ValueError("PGM image must be 2D")
    h, w = image.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval <= 255:
        body = image.astype(np.uint8).tobytes()
    else:
        body = image.astype(">u2").tobytes()
    return header + body


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode binary PGM bytes to (array, maxval)."""
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) stream")
    # header: magic, width, height, maxval separated by whitespace/comments
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    dtype = np.uint8 if maxval <= 255 else np.dtype(">u2")
    arr = np.frombuffer(data[pos:], dtype=dtype, count=w * h).reshape(h, w)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(image, maxval))


def read_pgm(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as f:
        return decode_pgm(f.read())
