"""SGD, CGA and HGA on the same layer, data and corruption stream.

Default setup: 1000 hidden units, 1000 images, 15 epochs, population 2 and the standard GA
hyperparameters. Writes one curve CSV per optimizer and a summary table.
"""

import numpy as np

from _common import dataset, outdir, parser
from sdae.dataset import CorruptionSpec
from sdae.genetic import default_ga_config, run_cga, run_hga
from sdae.network import init_layer
from sdae.sgd import SgdConfig, train_layer_sgd


def main():
    ap = parser(__doc__)
    ap.add_argument("--hidden", type=int, default=1000)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, nargs="+", default=[0.001],
                    help="one or more learning rates shared by SGD and HGA")
    ap.add_argument("--population", type=int, default=2)
    args = ap.parse_args()

    X = dataset(args).images[: args.count]
    out = outdir(args)
    template = init_layer(784, args.hidden, np.random.default_rng(args.seed))
    rows = ["lr,optimizer,final_error,seconds"]
    cga_done = None
    for lr in args.lr:
        sgd = template.copy()
        rec = train_layer_sgd(sgd, X, SgdConfig(lr, args.epochs, CorruptionSpec(0.25), args.threads, args.seed))
        runs = {"sgd": rec}
        cfg = default_ga_config(784, learning_rate=lr, epochs=args.epochs, seed=args.seed, threads=args.threads,
                                population=args.population)
        runs["hga"] = run_hga(template, X, cfg)[1]
        # CGA takes no gradient steps, so one run serves every learning rate
        if cga_done is None:
            cga_done = run_cga(template, X, cfg)[1]
        runs["cga"] = cga_done
        for name, r in runs.items():
            r.save_csv(out / f"{name}-lr{lr:g}.csv")
            rows.append(f"{lr:g},{name},{r.final_error:.6g},{r.seconds[-1]:.1f}")
            print(rows[-1], flush=True)
    (out / "summary.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
