"""Greedy stacked pretraining followed by supervised fine-tuning, optionally on a digit variant.

The full-size configuration is three 1000-unit layers (noise 0.1, 0.2, 0.3, 15 epochs at
0.001) and a 500-unit head fine-tuned for 30 epochs at 0.1. The defaults here are a
desk-sized version; pass --full for the full-size one.
"""

import numpy as np

from _common import dataset, parser
from sdae.dataset import CorruptionSpec, gen_bg_img, gen_bg_rand, gen_rot
from sdae.evalx import accuracy
from sdae.sgd import LayerSpec, SgdConfig, fine_tune, pretrain_stack


def main():
    ap = parser(__doc__)
    ap.add_argument("--variant", choices=["plain", "bg-rand", "bg-img", "rot"], default="plain")
    ap.add_argument("--backgrounds", help="directory of PGM backgrounds for bg-img")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--loss", choices=["squared_sigmoid", "crossentropy_softmax"], default="squared_sigmoid")
    args = ap.parse_args()

    ds = dataset(args)
    rng = np.random.default_rng(args.seed)
    if args.variant == "bg-rand":
        ds = gen_bg_rand(ds, rng)
    elif args.variant == "bg-img":
        ds = gen_bg_img(ds, args.backgrounds, rng)
    elif args.variant == "rot":
        ds = gen_rot(ds, rng)
    train, test = ds.subset(0, args.train), ds.subset(args.train, args.train + args.test)

    sizes, head, epochs = ([1000, 1000, 1000], [500, 10], 15) if args.full else ([500, 250], [100, 10], 5)
    noise = [0.1, 0.2, 0.3]
    specs = [LayerSpec(h, noise[k], SgdConfig(0.001, epochs, CorruptionSpec(noise[k]), args.threads, args.seed + k))
             for k, h in enumerate(sizes)]
    stack = pretrain_stack(specs, train)
    ft_epochs = 30 if args.full else 10
    rec = fine_tune(stack, train, head, SgdConfig(0.1, ft_epochs, CorruptionSpec(0.0), args.threads, args.seed),
                    args.loss)
    print(f"variant={args.variant} layers={len(sizes)} finetune_loss={rec.final_error:.6g} "
          f"train_accuracy={accuracy(stack, train):.4f} test_accuracy={accuracy(stack, test):.4f}")


if __name__ == "__main__":
    main()
