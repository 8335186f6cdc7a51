"""IDX loading, masking corruption, and the bg-rand / bg-img / rot digit variants."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from sdae.pgm import PgmError, atomic_write_bytes, read_pgm

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# stream tags keep the epoch streams of different consumers apart
EPOCH_STREAM = 0x5344_4145


class DataError(Exception):
    """Dataset content is unusable."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class ConfigError(Exception):
    """Invalid user configuration (bad directory, bad parameter)."""


@dataclass(frozen=True)
class CorruptionSpec:
    probability: float = 0.25
    kind: str = "masking"

    def __post_init__(self):
        if self.kind != "masking":
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"corruption probability must lie in [0, 1], got {self.probability}")


@dataclass
class ImageDataset:
    """Images as rows of an ``(count, height*width)`` float64 array in [0, 1]."""

    images: np.ndarray
    labels: np.ndarray
    width: int = 28
    height: int = 28

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or self.images.shape[1] != self.width * self.height:
            raise DataError(f"images of shape {self.images.shape} do not match {self.height}x{self.width}")
        if len(self.images) != len(self.labels):
            raise CountMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("pixel values outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise DataError("labels outside 0..9")

    def __len__(self):
        return len(self.labels)

    def subset(self, start: int, stop: int | None = None) -> "ImageDataset":
        return ImageDataset(self.images[start:stop], self.labels[start:stop], self.width, self.height)


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _parse_idx(buf: bytes, magic: int, path) -> tuple[tuple[int, ...], bytes]:
    if len(buf) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the IDX magic")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    need = int(np.prod(dims))
    body = buf[header:]
    if len(body) < need:
        raise TruncatedFileError(f"{path}: expected {need} data bytes, found {len(body)}")
    return dims, body[:need]


def load_idx(images_path, labels_path) -> ImageDataset:
    """Load an IDX image/label pair (plain or gzipped); pixels are scaled by 1/255."""
    (count, rows, cols), pix = _parse_idx(_read_maybe_gzip(images_path), IMAGE_MAGIC, images_path)
    (nlab,), lab = _parse_idx(_read_maybe_gzip(labels_path), LABEL_MAGIC, labels_path)
    if count != nlab:
        raise CountMismatchError(f"{count} images in {images_path} but {nlab} labels in {labels_path}")
    images = np.frombuffer(pix, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    return ImageDataset(images, labels, width=cols, height=rows)


def idx_bytes(ds: ImageDataset) -> tuple[bytes, bytes]:
    pix = np.rint(ds.images * 255.0).astype(np.uint8)
    img = struct.pack(">IIII", IMAGE_MAGIC, len(ds), ds.height, ds.width) + pix.tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, len(ds)) + ds.labels.astype(np.uint8).tobytes()
    return img, lab


def save_idx(ds: ImageDataset, images_path, labels_path) -> None:
    """Write ``ds`` as an uncompressed IDX pair, pixels quantized to bytes."""
    img, lab = idx_bytes(ds)
    atomic_write_bytes(images_path, img)
    atomic_write_bytes(labels_path, lab)


def corrupt(x: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    """Zero each element independently with probability ``spec.probability``.

    One uniform draw per element is consumed even when the probability is 0 or 1,
    so the stream position never depends on the corruption level.
    """
    draws = rng.random(x.shape[0])
    return np.where(draws < spec.probability, 0.0, x)


def epoch_rng(seed: int, epoch: int, tag: int = EPOCH_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag, epoch])))


def epoch_stream(data: np.ndarray, spec: CorruptionSpec, seed: int, epoch: int,
                 shuffle: bool = True) -> Iterator[tuple[int, int, np.ndarray, np.ndarray]]:
    """Yield ``(position, index, corrupted, clean)`` for one pass over the rows of ``data``.

    Each epoch has its own generator keyed by ``(seed, epoch)``: first the visiting
    permutation, then one fresh corruption mask per visited example. Every optimizer
    walks the data through this function, so a shared seed means shared examples.
    """
    rng = epoch_rng(seed, epoch)
    order = rng.permutation(len(data)) if shuffle else np.arange(len(data))
    for pos, idx in enumerate(order):
        x = data[idx]
        yield pos, int(idx), corrupt(x, spec, rng), x


def gen_bg_rand(ds: ImageDataset, rng: np.random.Generator) -> ImageDataset:
    """Composite every digit over uniform random noise (elementwise max)."""
    noise = rng.random(ds.images.shape)
    return ImageDataset(np.maximum(ds.images, noise), ds.labels.copy(), ds.width, ds.height)


def rotate_image(img: np.ndarray, angle: float) -> np.ndarray:
    """Rotate a 2-D image about its centre with bilinear sampling and zero fill."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = rr - cy, cc - cx
    # inverse map: where does each output pixel come from
    sy = c * dy - s * dx + cy
    sx = s * dy + c * dx + cx
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy, fx = sy - y0, sx - x0

    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = img

    def at(yy, xx):
        inside = (yy >= -1) & (yy <= h) & (xx >= -1) & (xx <= w)
        out = np.zeros_like(fy)
        out[inside] = padded[yy[inside] + 1, xx[inside] + 1]
        return out

    out = ((1 - fy) * (1 - fx) * at(y0, x0) + (1 - fy) * fx * at(y0, x0 + 1)
           + fy * (1 - fx) * at(y0 + 1, x0) + fy * fx * at(y0 + 1, x0 + 1))
    return np.clip(out, 0.0, 1.0)


def gen_rot(ds: ImageDataset, rng: np.random.Generator, fixed_angle: float | None = None) -> ImageDataset:
    """Rotate every digit by an angle uniform on [0, 2*pi), or by ``fixed_angle``."""
    out = np.empty_like(ds.images)
    for k, row in enumerate(ds.images):
        angle = rng.uniform(0.0, 2 * np.pi) if fixed_angle is None else fixed_angle
        out[k] = rotate_image(row.reshape(ds.height, ds.width), angle).ravel()
    return ImageDataset(out, ds.labels.copy(), ds.width, ds.height)


def load_backgrounds(directory, min_height: int, min_width: int) -> list[np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"background directory {directory} does not exist")
    backgrounds = []
    for path in sorted(directory.glob("*.pgm")):
        try:
            img, maxval = read_pgm(path)
        except (OSError, PgmError) as exc:
            raise ConfigError(f"unreadable background {path}: {exc}") from exc
        if img.shape[0] < min_height or img.shape[1] < min_width:
            raise ConfigError(f"background {path} is {img.shape}, smaller than {min_height}x{min_width}")
        backgrounds.append(img.astype(np.float64) / maxval)
    if not backgrounds:
        raise ConfigError(f"no PGM backgrounds found in {directory}")
    return backgrounds


def gen_bg_img(ds: ImageDataset, backgrounds, rng: np.random.Generator) -> ImageDataset:
    """Composite each digit (elementwise max) over a random patch of a random background.

    ``backgrounds`` is a directory of P5 PGM files or an already-loaded list of arrays in [0, 1].
    """
    if isinstance(backgrounds, (str, Path)):
        backgrounds = load_backgrounds(backgrounds, ds.height, ds.width)
    if not backgrounds:
        raise ConfigError("no backgrounds supplied")
    out = np.empty_like(ds.images)
    for k, row in enumerate(ds.images):
        bg = backgrounds[rng.integers(len(backgrounds))]
        r0 = rng.integers(bg.shape[0] - ds.height + 1)
        c0 = rng.integers(bg.shape[1] - ds.width + 1)
        patch = bg[r0 : r0 + ds.height, c0 : c0 + ds.width].ravel()
        out[k] = np.maximum(row, patch)
    return ImageDataset(out, ds.labels.copy(), ds.width, ds.height)
