"""Binary PGM (P5) reading and writing."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise PgmError(f"expected a 2-D uint8 array, got {pixels.dtype} {pixels.shape}")
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, pixels: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(pixels))


def _tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Pull ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out, i = [], 0
    while len(out) < count:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if i < len(buf) and buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise PgmError("truncated PGM header")
        out.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def decode_pgm(buf: bytes) -> np.ndarray:
    """Parse P5 bytes into a 2-D array (uint8 for maxval < 256, else uint16)."""
    toks, start = _tokens(buf, 4)
    if toks[0] != b"P5":
        raise PgmError(f"not a binary PGM (magic {toks[0]!r})")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError as exc:
        raise PgmError("malformed PGM header") from exc
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise PgmError(f"bad PGM geometry {w}x{h} maxval {maxval}")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = w * h * dtype.itemsize
    raster = buf[start : start + need]
    if len(raster) < need:
        raise PgmError("truncated PGM raster")
    img = np.frombuffer(raster, dtype=dtype).reshape(h, w)
    return img.astype(np.uint16) if maxval >= 256 else img.copy()


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return ``(pixels, maxval)``."""
    buf = Path(path).read_bytes()
    toks, _ = _tokens(buf, 4)
    img = decode_pgm(buf)
    return img, int(toks[3])
