"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

from sdae.dataset import load_idx

ROOT = Path(__file__).resolve().parent.parent
IMAGES = ROOT / "data" / "mnist5k-images-idx3-ubyte.gz"
LABELS = ROOT / "data" / "mnist5k-labels-idx1-ubyte.gz"


def parser(doc: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=doc.strip().splitlines()[0])
    ap.add_argument("--images", default=str(IMAGES))
    ap.add_argument("--labels", default=str(LABELS))
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    return ap


def dataset(args):
    return load_idx(args.images, args.labels)


def outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out
