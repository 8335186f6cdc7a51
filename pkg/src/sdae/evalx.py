"""Filter and reconstruction images, encoded-feature export, and a softmax-regression probe."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from sdae.dataset import CorruptionSpec, ImageDataset, corrupt
from sdae.linalg import DimensionError, softmax_vec
from sdae.network import DenseTiedLayer, StackedAutoencoder, decode, encode, encode_all
from sdae.pgm import atomic_write_bytes, write_pgm
from sdae.sgd import classify

# entries at or below this magnitude are omitted; matches the 6-digit round-trip tolerance
FEATURE_EPS = 5e-7


def normalize_tile(v: np.ndarray) -> np.ndarray:
    """Min-max map to 0..255; a constant tile becomes mid-grey (128)."""
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    return np.rint((v - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def quantize_tile(v: np.ndarray) -> np.ndarray:
    """Direct map of [0, 1] intensities to 0..255."""
    return np.rint(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)


def grid_shape(rows: int, cols: int, tile_h: int, tile_w: int) -> tuple[int, int]:
    return rows * (tile_h + 1) + 1, cols * (tile_w + 1) + 1


def tile_grid(tiles: list[np.ndarray], tile_h: int, tile_w: int, cols: int, rows: int | None = None) -> np.ndarray:
    """Lay uint8 tiles out row by row with 1-pixel black separators and border."""
    if rows is None:
        rows = max(1, math.ceil(len(tiles) / cols))
    if len(tiles) > rows * cols:
        raise ValueError(f"{len(tiles)} tiles do not fit a {rows}x{cols} grid")
    out = np.zeros(grid_shape(rows, cols, tile_h, tile_w), dtype=np.uint8)
    for k, tile in enumerate(tiles):
        r, c = divmod(k, cols)
        y, x = 1 + r * (tile_h + 1), 1 + c * (tile_w + 1)
        out[y : y + tile_h, x : x + tile_w] = np.asarray(tile).reshape(tile_h, tile_w)
    return out


def _tile_dims(m: int, width: int | None, height: int | None) -> tuple[int, int]:
    if width and height:
        if width * height != m:
            raise DimensionError(f"{height}x{width} tiles do not hold {m} values")
        return height, width
    side = math.isqrt(m)
    if side * side != m:
        raise DimensionError(f"input dimension {m} is not a perfect square; give width and height")
    return side, side


def filter_grid(layer: DenseTiedLayer, count: int, width: int | None = None, height: int | None = None) -> np.ndarray:
    if not 1 <= count <= layer.hidden_count:
        raise ValueError(f"count must lie in [1, {layer.hidden_count}], got {count}")
    h, w = _tile_dims(layer.input_count, width, height)
    cols = math.ceil(math.sqrt(count))
    return tile_grid([normalize_tile(layer.W[i]) for i in range(count)], h, w, cols)


def export_filters(layer: DenseTiedLayer, count: int, path, width: int | None = None,
                   height: int | None = None) -> None:
    """First ``count`` rows of ``W``, each normalized on its own, as a PGM grid."""
    write_pgm(path, filter_grid(layer, count, width, height))


def reconstruct_through(model, x: np.ndarray, threads: int | None = None) -> np.ndarray:
    layers = model.layers if isinstance(model, StackedAutoencoder) else [model]
    h = x
    for layer in layers:
        h = encode(layer, h, threads)
    for layer in reversed(layers):
        h = decode(layer, h, threads)
    return h


def reconstruction_grid(model, examples: np.ndarray, corruption: CorruptionSpec, rng: np.random.Generator,
                        width: int | None = None, height: int | None = None, cols: int = 10) -> np.ndarray:
    """Blocks of three rows: originals, corrupted inputs, reconstructions (one column per example)."""
    examples = np.atleast_2d(examples)
    layers = model.layers if isinstance(model, StackedAutoencoder) else [model]
    if not layers or examples.shape[1] != layers[0].input_count:
        raise DimensionError(f"examples of width {examples.shape[1]} do not fit the model")
    h, w = _tile_dims(examples.shape[1], width, height)
    cols = min(cols, len(examples))
    blocks = math.ceil(len(examples) / cols)
    tiles = [np.zeros(h * w, dtype=np.uint8)] * (3 * blocks * cols)
    for k, x in enumerate(examples):
        xc = corrupt(x, corruption, rng)
        z = reconstruct_through(model, xc)
        blk, c = divmod(k, cols)
        base = 3 * blk * cols + c
        tiles[base] = quantize_tile(x)
        tiles[base + cols] = quantize_tile(xc)
        tiles[base + 2 * cols] = quantize_tile(z)
    return tile_grid(tiles, h, w, cols, rows=3 * blocks)


def export_reconstructions(model, examples: np.ndarray, corruption: CorruptionSpec, path,
                           rng: np.random.Generator | None = None, width: int | None = None,
                           height: int | None = None) -> None:
    rng = np.random.default_rng(0) if rng is None else rng
    write_pgm(path, reconstruction_grid(model, examples, corruption, rng, width, height))


def format_sparse(features: np.ndarray, labels: np.ndarray) -> str:
    lines = []
    for label, row in zip(labels, features):
        idx = np.flatnonzero(np.abs(row) > FEATURE_EPS)
        cells = " ".join(f"{i + 1}:{row[i]:.6g}" for i in idx)
        lines.append(f"{int(label)} {cells}".rstrip())
    return "\n".join(lines) + "\n"


def export_encoded(stack: StackedAutoencoder, ds: ImageDataset, path, threads: int | None = None) -> None:
    """Clean encodings of every example in ``<label> <index>:<value>`` lines (1-based indices)."""
    if not stack.layers:
        raise ValueError("stack has no autoencoder layers")
    atomic_write_bytes(path, format_sparse(encode_all(stack, ds.images, threads), ds.labels).encode())


def parse_sparse(path, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a sparse feature file back into a dense matrix and label vector."""
    labels, rows = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        head, *cells = line.split()
        labels.append(int(float(head)))
        rows.append({int(k): float(v) for k, v in (c.split(":") for c in cells)})
    if dim is None:
        dim = max((max(r) for r in rows if r), default=0)
    X = np.zeros((len(rows), dim))
    for k, r in enumerate(rows):
        for i, v in r.items():
            X[k, i - 1] = v
    return X, np.array(labels, dtype=np.int64)


class SoftmaxRegression:
    """Single softmax layer trained by per-example steps ``W -= eta * (z - t) x^T``."""

    def __init__(self, dim: int, classes: int = 10):
        self.W = np.zeros((classes, dim))
        self.b = np.zeros(classes)

    def fit(self, X: np.ndarray, y: np.ndarray, epochs: int = 30, eta: float = 0.01, seed: int = 0):
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            for i in rng.permutation(len(X)):
                z = softmax_vec(self.W @ X[i] + self.b)
                z[y[i]] -= 1.0
                self.W -= eta * np.outer(z, X[i])
                self.b -= eta * z
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(X @ self.W.T + self.b, axis=1)


def softmax_regression_eval(train_X: np.ndarray, train_y: np.ndarray, test_X: np.ndarray, test_y: np.ndarray,
                            epochs: int = 30, eta: float = 0.01, seed: int = 0) -> float:
    """Test accuracy of a softmax regression fitted on the training features."""
    if len(train_X) == 0 or len(test_X) == 0:
        raise ValueError("empty training or test set")
    if train_X.shape[1] != test_X.shape[1]:
        raise DimensionError(f"train width {train_X.shape[1]} != test width {test_X.shape[1]}")
    model = SoftmaxRegression(train_X.shape[1]).fit(train_X, np.asarray(train_y), epochs, eta, seed)
    return float(np.mean(model.predict(test_X) == np.asarray(test_y)))


def accuracy(stack: StackedAutoencoder, ds: ImageDataset, threads: int | None = None) -> float:
    if not stack.head:
        raise ValueError("network has no classifier head")
    hits = sum(classify(stack, x, threads) == label for x, label in zip(ds.images, ds.labels))
    return hits / len(ds) if len(ds) else 0.0
