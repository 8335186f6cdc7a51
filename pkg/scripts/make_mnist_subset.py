"""Write the 5000-digit MNIST sample bundled with mlxtend as gzipped IDX files.

The sample is stored sorted by label; rows are shuffled with a fixed seed so any prefix
is class-balanced in expectation.

    pip install mlxtend
    python scripts/make_mnist_subset.py --out data
"""

import argparse
import gzip
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from sdae.dataset import ImageDataset, idx_bytes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=20150501)
    args = ap.parse_args()

    X, y = mnist_data()
    order = np.random.default_rng(args.seed).permutation(len(y))
    ds = ImageDataset(X[order] / 255.0, y[order])
    img, lab = idx_bytes(ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archives byte-reproducible
    (out / "mnist5k-images-idx3-ubyte.gz").write_bytes(gzip.compress(img, mtime=0))
    (out / "mnist5k-labels-idx1-ubyte.gz").write_bytes(gzip.compress(lab, mtime=0))
    print(f"wrote {len(ds)} digits to {out}/ (label counts {np.bincount(ds.labels).tolist()})")


if __name__ == "__main__":
    main()
