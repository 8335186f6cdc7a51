"""HGA final error and runtime as the population grows.

A larger population should reach an error no worse than N=2 at a runtime roughly linear in N.
"""

import numpy as np

from _common import dataset, outdir, parser
from sdae.genetic import default_ga_config, run_hga
from sdae.network import init_layer


def main():
    ap = parser(__doc__)
    ap.add_argument("--populations", default="2,4,8,16,32")
    ap.add_argument("--hidden", type=int, default=1000)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=0.001)
    args = ap.parse_args()

    X = dataset(args).images[: args.count]
    template = init_layer(784, args.hidden, np.random.default_rng(args.seed))
    rows = ["population,final_error,seconds"]
    for n in (int(v) for v in args.populations.split(",")):
        cfg = default_ga_config(784, population=n, learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
                                threads=args.threads)
        _, rec = run_hga(template, X, cfg)
        rows.append(f"{n},{rec.final_error:.6g},{rec.seconds[-1]:.1f}")
        print(rows[-1], flush=True)
    (outdir(args) / "population.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
