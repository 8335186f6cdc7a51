"""Tied-weight autoencoder layers, stacking, classifier heads and model files."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sdae.linalg import DimensionError, matvec, matvec_transposed, rank1_update, sigmoid_vec, softmax_vec
from sdae.pgm import atomic_write_bytes

SQUARED_SIGMOID = "squared_sigmoid"
CROSSENTROPY_SOFTMAX = "crossentropy_softmax"
HEAD_LOSSES = (SQUARED_SIGMOID, CROSSENTROPY_SOFTMAX)

MODEL_MAGIC = b"SDAE"
MODEL_VERSION = 1

_LOG_CLAMP = 1e-12


@dataclass
class DenseTiedLayer:
    """One autoencoder layer: encoder ``W`` (hidden x input), encode bias ``b``, decode bias ``b_prime``.

    The decoder reuses ``W`` through transposed indexing; no second matrix is stored.
    """

    W: np.ndarray
    b: np.ndarray
    b_prime: np.ndarray

    def __post_init__(self):
        n, m = self.W.shape
        if self.b.shape != (n,) or self.b_prime.shape != (m,):
            raise DimensionError(f"W {self.W.shape} with b {self.b.shape}, b' {self.b_prime.shape}")

    @property
    def input_count(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_count(self) -> int:
        return self.W.shape[0]

    @property
    def param_count(self) -> int:
        return genome_length(self.input_count, self.hidden_count)

    @classmethod
    def view_of(cls, genome: np.ndarray, m: int, n: int) -> "DenseTiedLayer":
        """A layer whose arrays alias ``genome`` (W row-major, then b, then b')."""
        if genome.shape != (genome_length(m, n),):
            raise DimensionError(f"genome length {genome.shape} does not fit m={m}, n={n}")
        W = genome[: n * m].reshape(n, m)
        b = genome[n * m : n * m + n]
        bp = genome[n * m + n :]
        return cls(W, b, bp)

    def copy(self) -> "DenseTiedLayer":
        return DenseTiedLayer(self.W.copy(), self.b.copy(), self.b_prime.copy())


@dataclass
class DenseLayer:
    """Plain feed-forward layer of a classifier head: ``W`` is (outputs x inputs)."""

    W: np.ndarray
    b: np.ndarray


@dataclass
class StackedAutoencoder:
    layers: list[DenseTiedLayer] = field(default_factory=list)
    head: list[DenseLayer] = field(default_factory=list)
    head_loss: str = SQUARED_SIGMOID

    def __post_init__(self):
        for lower, upper in zip(self.layers, self.layers[1:]):
            if lower.hidden_count != upper.input_count:
                raise DimensionError(
                    f"layer with {lower.hidden_count} hidden units cannot feed a layer of {upper.input_count} inputs")
        if self.head_loss not in HEAD_LOSSES:
            raise ValueError(f"unknown head loss {self.head_loss!r}")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].hidden_count if self.layers else 0


@dataclass
class GradientWorkspace:
    """Scratch buffers for one layer's gradient step."""

    y: np.ndarray
    z: np.ndarray
    delta_O: np.ndarray
    delta_H: np.ndarray
    back: np.ndarray

    @classmethod
    def for_layer(cls, layer: DenseTiedLayer) -> "GradientWorkspace":
        m, n = layer.input_count, layer.hidden_count
        return cls(np.empty(n), np.empty(m), np.empty(m), np.empty(n), np.empty(n))


def genome_length(m: int, n: int) -> int:
    return n * m + n + m


def init_layer(m: int, n: int, rng: np.random.Generator) -> DenseTiedLayer:
    """Weights and biases uniform on [-1/sqrt(m), 1/sqrt(m)], m being the fan-in."""
    if m < 1 or n < 1:
        raise ValueError(f"layer sizes must be positive, got m={m}, n={n}")
    r = 1.0 / np.sqrt(m)
    genome = rng.uniform(-r, r, genome_length(m, n))
    return DenseTiedLayer.view_of(genome, m, n)


def encode(layer: DenseTiedLayer, x: np.ndarray, threads: int | None = None, out=None) -> np.ndarray:
    y = matvec(layer.W, x, out=out, threads=threads)
    y += layer.b
    return sigmoid_vec(y, out=y)


def decode(layer: DenseTiedLayer, y: np.ndarray, threads: int | None = None, out=None) -> np.ndarray:
    z = matvec_transposed(layer.W, y, out=out, threads=threads)
    z += layer.b_prime
    return sigmoid_vec(z, out=z)


def reconstruct(layer: DenseTiedLayer, x: np.ndarray, threads: int | None = None) -> np.ndarray:
    return decode(layer, encode(layer, x, threads), threads)


def squared_loss(t: np.ndarray, z: np.ndarray) -> float:
    if t.shape != z.shape:
        raise DimensionError(f"loss on shapes {t.shape} and {z.shape}")
    d = t - z
    return 0.5 * float(d @ d)


def cross_entropy_loss(t: np.ndarray, z: np.ndarray) -> float:
    if t.shape != z.shape:
        raise DimensionError(f"loss on shapes {t.shape} and {z.shape}")
    zc = np.clip(z, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    return float(-np.sum(t * np.log(zc) + (1.0 - t) * np.log1p(-zc)))


def tied_gradient_step(layer: DenseTiedLayer, x_corr: np.ndarray, t: np.ndarray, eta: float,
                       mode: str = "sequential", threads: int | None = None,
                       ws: GradientWorkspace | None = None) -> float:
    """One backpropagation step on a tied layer; returns the loss before the update.

    ``sequential`` (default) writes the decoder update into ``W`` first and then forms the
    hidden deltas from the already-updated ``W``, as the update loop is written.
    ``simultaneous`` forms both deltas from the pre-update ``W``, i.e. it follows the exact
    gradient of the reconstruction loss.
    """
    if mode not in ("sequential", "simultaneous"):
        raise ValueError(f"unknown update mode {mode!r}")
    if x_corr.shape != (layer.input_count,) or t.shape != (layer.input_count,):
        raise DimensionError(f"layer takes {layer.input_count} inputs, got {x_corr.shape} / {t.shape}")
    if ws is None:
        ws = GradientWorkspace.for_layer(layer)
    y = encode(layer, x_corr, threads, out=ws.y)
    z = decode(layer, y, threads, out=ws.z)
    loss = squared_loss(t, z)
    if eta == 0.0:
        return loss

    dO = ws.delta_O
    np.subtract(z, t, out=dO)
    dO *= z
    dO *= 1.0 - z

    dH = ws.delta_H
    if mode == "simultaneous":
        matvec(layer.W, dO, out=ws.back, threads=threads)
    # decoder: W^O = W^T, so W^O_ij -= eta * dO_j * y_i lands on W[i, j]
    rank1_update(layer.W, -eta, dO, y, transposed=True, threads=threads)
    layer.b_prime -= eta * dO
    if mode == "sequential":
        matvec(layer.W, dO, out=ws.back, threads=threads)
    np.multiply(ws.back, y, out=dH)
    dH *= 1.0 - y
    rank1_update(layer.W, -eta, dH, x_corr, threads=threads)
    layer.b -= eta * dH
    return loss


def flatten_params(layer: DenseTiedLayer) -> np.ndarray:
    return np.concatenate([layer.W.ravel(), layer.b, layer.b_prime])


def unflatten_params(layer: DenseTiedLayer, genome: np.ndarray) -> None:
    m, n = layer.input_count, layer.hidden_count
    if genome.shape != (genome_length(m, n),):
        raise DimensionError(f"genome of length {genome.shape} does not fit a {m}->{n} layer")
    layer.W[...] = genome[: n * m].reshape(n, m)
    layer.b[...] = genome[n * m : n * m + n]
    layer.b_prime[...] = genome[n * m + n :]


def init_head(sizes: list[int], rng: np.random.Generator) -> list[DenseLayer]:
    """Dense layers chaining ``sizes[0] -> sizes[1] -> ...``, each uniform on +-1/sqrt(fan-in)."""
    head = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        r = 1.0 / np.sqrt(fan_in)
        head.append(DenseLayer(rng.uniform(-r, r, (fan_out, fan_in)), rng.uniform(-r, r, fan_out)))
    return head


def encode_stack(stack: StackedAutoencoder, x: np.ndarray, threads: int | None = None) -> np.ndarray:
    for layer in stack.layers:
        x = encode(layer, x, threads)
    return x


def encode_all(stack: StackedAutoencoder, X: np.ndarray, threads: int | None = None) -> np.ndarray:
    """Uncorrupted encodings of every row of ``X`` through all autoencoder layers."""
    if not stack.layers:
        return np.array(X, dtype=np.float64)
    out = np.empty((len(X), stack.output_dim))
    for k, x in enumerate(X):
        out[k] = encode_stack(stack, x, threads)
    return out


def head_forward(stack: StackedAutoencoder, h: np.ndarray, threads: int | None = None) -> list[np.ndarray]:
    """Activations of every head layer, last one being the class scores."""
    acts = []
    for k, layer in enumerate(stack.head):
        a = matvec(layer.W, h, threads=threads) + layer.b
        last = k == len(stack.head) - 1
        h = softmax_vec(a) if last and stack.head_loss == CROSSENTROPY_SOFTMAX else sigmoid_vec(a)
        acts.append(h)
    return acts


def forward_full(stack: StackedAutoencoder, x: np.ndarray, threads: int | None = None) -> np.ndarray:
    if not stack.head:
        raise ValueError("network has no classifier head")
    return head_forward(stack, encode_stack(stack, x, threads), threads)[-1]


def save_model(stack: StackedAutoencoder, path) -> None:
    atomic_write_bytes(path, model_bytes(stack))


def model_bytes(stack: StackedAutoencoder) -> bytes:
    """Little-endian model file.

    Header: ``b"SDAE"``, u32 version, u32 layer count, (u32 m, u32 n) per layer,
    u32 head-layer count, u32 head loss (0 squared/sigmoid, 1 cross-entropy/softmax),
    then head sizes (count + 1 values when the head is non-empty). Payload: float64 blocks,
    every tied layer in flatten order, then every head layer as W row-major followed by b.
    """
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(stack.layers))]
    for layer in stack.layers:
        parts.append(struct.pack("<II", layer.input_count, layer.hidden_count))
    parts.append(struct.pack("<II", len(stack.head), HEAD_LOSSES.index(stack.head_loss)))
    if stack.head:
        sizes = [stack.head[0].W.shape[1]] + [h.W.shape[0] for h in stack.head]
        parts.append(struct.pack(f"<{len(sizes)}I", *sizes))
    for layer in stack.layers:
        parts.append(flatten_params(layer).astype("<f8").tobytes())
    for h in stack.head:
        parts.append(np.concatenate([h.W.ravel(), h.b]).astype("<f8").tobytes())
    return b"".join(parts)


class ModelFormatError(ValueError):
    pass


def load_model(path) -> StackedAutoencoder:
    return parse_model(Path(path).read_bytes())


def parse_model(buf: bytes) -> StackedAutoencoder:
    if buf[:4] != MODEL_MAGIC:
        raise ModelFormatError("not an SDAE model file")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ModelFormatError("truncated model file")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, nlayers = take("<II")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    shapes = [take("<II") for _ in range(nlayers)]
    nhead, loss_code = take("<II")
    if loss_code >= len(HEAD_LOSSES):
        raise ModelFormatError(f"unknown head loss code {loss_code}")
    sizes = list(take(f"<{nhead + 1}I")) if nhead else []

    def floats(count):
        nonlocal pos
        if pos + 8 * count > len(buf):
            raise ModelFormatError("truncated model file")
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        return arr

    layers = [DenseTiedLayer.view_of(floats(genome_length(m, n)), m, n) for m, n in shapes]
    head = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        flat = floats(fan_in * fan_out + fan_out)
        head.append(DenseLayer(flat[: fan_in * fan_out].reshape(fan_out, fan_in), flat[fan_in * fan_out :]))
    if pos != len(buf):
        raise ModelFormatError(f"{len(buf) - pos} trailing bytes in model file")
    return StackedAutoencoder(layers, head, HEAD_LOSSES[loss_code])

