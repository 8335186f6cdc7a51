"""Per-example backpropagation: single-layer denoising training, greedy stacking, fine-tuning."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sdae.dataset import CorruptionSpec, DataError, ImageDataset, epoch_stream
from sdae.linalg import DimensionError, matvec_transposed, rank1_update
from sdae.network import (
    CROSSENTROPY_SOFTMAX,
    HEAD_LOSSES,
    SQUARED_SIGMOID,
    DenseTiedLayer,
    GradientWorkspace,
    StackedAutoencoder,
    cross_entropy_loss,
    encode,
    encode_all,
    forward_full,
    head_forward,
    init_head,
    init_layer,
    squared_loss,
    tied_gradient_step,
)
from sdae.pgm import atomic_write_bytes

log = logging.getLogger(__name__)

NUM_CLASSES = 10


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    epochs: int = 15
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    threads: int | None = None
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        # eta = 0 is allowed as a pure evaluation pass
        if not self.learning_rate >= 0:
            raise ValueError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class RunRecord:
    """Per-epoch (index, cumulative wall seconds, summed error)."""

    epochs: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)

    def append(self, epoch: int, seconds: float, error: float) -> None:
        self.epochs.append(epoch)
        self.seconds.append(seconds)
        self.errors.append(error)

    def __len__(self):
        return len(self.epochs)

    @property
    def final_error(self) -> float:
        return self.errors[-1]

    def epoch_seconds(self) -> list[float]:
        return list(np.diff([0.0] + self.seconds))

    def to_csv(self) -> str:
        lines = ["epoch,seconds,error"]
        lines += [f"{e},{s:.6g},{err:.6g}" for e, s, err in zip(self.epochs, self.seconds, self.errors)]
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        atomic_write_bytes(path, self.to_csv().encode())

    @classmethod
    def from_csv(cls, text: str) -> "RunRecord":
        rows = text.strip().splitlines()
        if not rows or rows[0] != "epoch,seconds,error":
            raise ValueError("not a run-record CSV")
        rec = cls()
        for row in rows[1:]:
            e, s, err = row.split(",")
            rec.append(int(e), float(s), float(err))
        return rec

    @classmethod
    def load_csv(cls, path) -> "RunRecord":
        return cls.from_csv(Path(path).read_text())


def as_matrix(data) -> np.ndarray:
    if isinstance(data, ImageDataset):
        return data.images
    return np.ascontiguousarray(data, dtype=np.float64)


def train_layer_sgd(layer: DenseTiedLayer, data, cfg: SgdConfig, mode: str = "sequential") -> RunRecord:
    """Denoising SGD on one layer, in place. Each epoch error is the summed pre-update loss."""
    X = as_matrix(data)
    if X.ndim != 2 or X.shape[1] != layer.input_count:
        raise DimensionError(f"data of shape {X.shape} for a layer with {layer.input_count} inputs")
    ws = GradientWorkspace.for_layer(layer)
    rec = RunRecord()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        total = 0.0
        for _, _, x_corr, x in epoch_stream(X, cfg.corruption, cfg.seed, epoch, cfg.shuffle):
            total += tied_gradient_step(layer, x_corr, x, cfg.learning_rate, mode, cfg.threads, ws)
        rec.append(epoch + 1, time.perf_counter() - start, total)
        log.info("sgd epoch %d error %.6g (%.2fs)", epoch + 1, total, rec.seconds[-1])
    return rec


@dataclass
class LayerSpec:
    hidden: int
    corruption: float
    cfg: SgdConfig = field(default_factory=SgdConfig)


def pretrain_stack(layer_specs: list[LayerSpec], data, records: list | None = None) -> StackedAutoencoder:
    """Greedy layer-wise pretraining.

    Layer k trains on the clean encodings produced by layers 1..k-1 and corrupts that
    input inside its own loop with the probability from its spec.
    """
    if not layer_specs:
        raise ValueError("no layer specs given")
    X = as_matrix(data)
    stack = StackedAutoencoder()
    for k, spec in enumerate(layer_specs):
        cfg = SgdConfig(spec.cfg.learning_rate, spec.cfg.epochs, CorruptionSpec(spec.corruption),
                        spec.cfg.threads, spec.cfg.seed, spec.cfg.shuffle)
        layer = init_layer(X.shape[1], spec.hidden, np.random.default_rng(cfg.seed))
        rec = train_layer_sgd(layer, X, cfg)
        if records is not None:
            records.append(rec)
        stack = StackedAutoencoder(stack.layers + [layer])
        if k + 1 < len(layer_specs):
            X = encode_all(StackedAutoencoder([layer]), X, cfg.threads)
    return stack


def one_hot(label: int, classes: int = NUM_CLASSES) -> np.ndarray:
    t = np.zeros(classes)
    t[label] = 1.0
    return t


def fine_tune(stack: StackedAutoencoder, data: ImageDataset, head_spec: list[int], cfg: SgdConfig,
              loss: str = SQUARED_SIGMOID) -> RunRecord:
    """Supervised backpropagation through the classifier head and every encoder.

    A head is created from ``head_spec`` (sizes after the last encoder, ending in 10) unless
    the stack already has one. Encoders update ``W`` and ``b`` only; decode biases stay
    frozen. Updates run output layer first, each layer's delta for the layer below being
    formed from its freshly updated weights. No corruption is applied.
    """
    if loss not in HEAD_LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    if not isinstance(data, ImageDataset) or len(data.labels) != len(data.images):
        raise DataError("fine-tuning needs a labelled dataset")
    if not stack.head:
        if not head_spec or head_spec[-1] != NUM_CLASSES:
            raise DimensionError(f"head sizes must end in {NUM_CLASSES}, got {head_spec}")
        in_dim = stack.output_dim or data.images.shape[1]
        stack.head = init_head([in_dim, *head_spec], np.random.default_rng(cfg.seed))
    stack.head_loss = loss
    in_dim = stack.layers[0].input_count if stack.layers else stack.head[0].W.shape[1]
    if data.images.shape[1] != in_dim:
        raise DimensionError(f"network takes {in_dim} inputs, data has {data.images.shape[1]}")

    # every trainable map as (W, b); activations are sigmoid except a softmax output
    maps = [(layer.W, layer.b) for layer in stack.layers] + [(h.W, h.b) for h in stack.head]
    no_corruption = CorruptionSpec(0.0)
    eta = cfg.learning_rate
    rec = RunRecord()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        total = 0.0
        for _, idx, _, x in epoch_stream(data.images, no_corruption, cfg.seed, epoch, cfg.shuffle):
            acts = [x]
            for layer in stack.layers:
                acts.append(encode(layer, acts[-1], cfg.threads))
            acts += head_forward(stack, acts[-1], cfg.threads)
            z, t = acts[-1], one_hot(data.labels[idx])
            if loss == CROSSENTROPY_SOFTMAX:
                total += cross_entropy_loss(t, z)
                delta = z - t
            else:
                total += squared_loss(t, z)
                delta = (z - t) * z * (1.0 - z)
            for k in range(len(maps) - 1, -1, -1):
                W, b = maps[k]
                a_in = acts[k]
                rank1_update(W, -eta, delta, a_in, threads=cfg.threads)
                b -= eta * delta
                if k > 0:
                    delta = matvec_transposed(W, delta, threads=cfg.threads) * a_in * (1.0 - a_in)
        rec.append(epoch + 1, time.perf_counter() - start, total)
        log.info("fine-tune epoch %d loss %.6g", epoch + 1, total)
    return rec


def classify(stack: StackedAutoencoder, x: np.ndarray, threads: int | None = None) -> int:
    """Arg-max class; ties go to the lowest index."""
    return int(np.argmax(forward_full(stack, x, threads)))
