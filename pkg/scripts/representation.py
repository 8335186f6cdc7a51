"""Softmax regression on raw pixels versus on denoising-autoencoder features.

Trains one layer on the first --train images, evaluates on the next --test images, and
writes the encoded features in sparse ``label index:value`` format for external classifiers.
"""

import numpy as np

from _common import dataset, outdir, parser
from sdae.dataset import CorruptionSpec
from sdae.evalx import export_encoded, softmax_regression_eval
from sdae.network import StackedAutoencoder, encode_all, init_layer
from sdae.sgd import SgdConfig, train_layer_sgd


def main():
    ap = parser(__doc__)
    ap.add_argument("--hidden", type=int, default=1000)
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--probe-epochs", type=int, default=30)
    ap.add_argument("--probe-lr", type=float, default=0.01)
    args = ap.parse_args()

    ds = dataset(args)
    train, test = ds.subset(0, args.train), ds.subset(args.train, args.train + args.test)
    out = outdir(args)
    layer = init_layer(784, args.hidden, np.random.default_rng(args.seed))
    train_layer_sgd(layer, train.images, SgdConfig(args.lr, args.epochs, CorruptionSpec(0.25), args.threads, args.seed))
    stack = StackedAutoencoder([layer])
    export_encoded(stack, train, out / "train.features")
    export_encoded(stack, test, out / "test.features")

    raw = softmax_regression_eval(train.images, train.labels, test.images, test.labels,
                                  args.probe_epochs, args.probe_lr, args.seed)
    enc = softmax_regression_eval(encode_all(stack, train.images), train.labels, encode_all(stack, test.images),
                                  test.labels, args.probe_epochs, args.probe_lr, args.seed)
    print(f"raw={raw:.4f} encoded={enc:.4f}")


if __name__ == "__main__":
    main()
