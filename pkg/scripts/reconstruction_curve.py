"""Total reconstruction error versus elapsed time for single-layer denoising SGD.

Default setup: 500 hidden units, 5000 images, masking 0.25, 15 epochs. Writes
curve.csv (epoch,seconds,error), model.sdae, filters.pgm and reconstructions.pgm.
"""

import numpy as np

from _common import dataset, outdir, parser
from sdae.dataset import CorruptionSpec
from sdae.evalx import export_filters, export_reconstructions
from sdae.network import StackedAutoencoder, init_layer, save_model
from sdae.sgd import SgdConfig, train_layer_sgd


def main():
    ap = parser(__doc__)
    ap.add_argument("--hidden", type=int, default=500)
    ap.add_argument("--count", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--corruption", type=float, default=0.25)
    args = ap.parse_args()

    ds = dataset(args).subset(0, args.count)
    out = outdir(args)
    layer = init_layer(784, args.hidden, np.random.default_rng(args.seed))
    cfg = SgdConfig(args.lr, args.epochs, CorruptionSpec(args.corruption), args.threads, args.seed)
    rec = train_layer_sgd(layer, ds.images, cfg)
    rec.save_csv(out / "curve.csv")
    save_model(StackedAutoencoder([layer]), out / "model.sdae")
    export_filters(layer, min(100, args.hidden), out / "filters.pgm")
    export_reconstructions(layer, ds.images[:10], cfg.corruption, out / "reconstructions.pgm",
                           np.random.default_rng(args.seed))
    for e, s, err in zip(rec.epochs, rec.seconds, rec.errors):
        print(f"epoch {e:2d}  {s:8.1f} s  error {err:.1f}")


if __name__ == "__main__":
    main()
