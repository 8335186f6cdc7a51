"""Seconds per epoch over a threads x hidden-units grid for SGD and HGA.

Thin wrapper over ``sdae bench``; each cell is the median of 3 epochs after a warm-up.
"""

import sys

from _common import outdir, parser
from sdae.cli import main as cli


def main():
    ap = parser(__doc__)
    ap.add_argument("--threads-list", default="1,2,4,8,16")
    ap.add_argument("--hidden-list", default="500,1000")
    ap.add_argument("--count", type=int, default=1000)
    args = ap.parse_args()
    out = outdir(args)
    for optimizer in ("sgd", "hga"):
        code = cli(["bench", "--images", args.images, "--labels", args.labels, "--images-count", str(args.count),
                    "--threads-list", args.threads_list, "--hidden-list", args.hidden_list,
                    "--optimizer", optimizer, "--seed", str(args.seed), "--out", str(out / f"bench-{optimizer}.csv")])
        if code:
            sys.exit(code)
        print((out / f"bench-{optimizer}.csv").read_text(), end="")


if __name__ == "__main__":
    main()
