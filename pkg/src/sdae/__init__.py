"""Stacked denoising autoencoders trained by SGD, a conventional GA and a gradient-hybrid GA."""

import os
import sys

# numba reads these once at import; they only apply if numba is not loaded yet.
# The larger pool lets thread sweeps request 4/8/16 threads on small machines.
if "numba" not in sys.modules:
    os.environ.setdefault("NUMBA_NUM_THREADS", str(max(16, os.cpu_count() or 1)))
    os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from sdae.dataset import CorruptionSpec, ImageDataset, load_idx, save_idx  # noqa: E402
from sdae.genetic import GaConfig, default_ga_config, run_cga, run_hga  # noqa: E402
from sdae.network import DenseTiedLayer, StackedAutoencoder, init_layer  # noqa: E402
from sdae.sgd import RunRecord, SgdConfig, fine_tune, pretrain_stack, train_layer_sgd  # noqa: E402

__all__ = [
    "CorruptionSpec",
    "DenseTiedLayer",
    "GaConfig",
    "ImageDataset",
    "RunRecord",
    "SgdConfig",
    "StackedAutoencoder",
    "default_ga_config",
    "fine_tune",
    "init_layer",
    "load_idx",
    "pretrain_stack",
    "run_cga",
    "run_hga",
    "save_idx",
    "train_layer_sgd",
]
