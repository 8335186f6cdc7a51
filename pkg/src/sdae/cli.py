"""Command-line entry point: ``sdae train|pretrain-finetune|bench|gen-variant|export``.

Exit codes: 0 success, 2 invalid usage or configuration, 3 bad input data, 4 I/O failure.
Diagnostics go to standard error; each command prints one ``key=value`` summary line.
"""

from __future__ import annotations

import argparse
import logging
import statistics
import sys

import numpy as np

from sdae.dataset import ConfigError, CorruptionSpec, DataError, gen_bg_img, gen_bg_rand, gen_rot, load_idx, save_idx
from sdae.evalx import accuracy, export_encoded, export_filters, export_reconstructions
from sdae.genetic import GaConfig, default_ga_config, load_ga_config, run_cga, run_hga
from sdae.linalg import DimensionError, resolve_threads
from sdae.network import (
    CROSSENTROPY_SOFTMAX,
    SQUARED_SIGMOID,
    ModelFormatError,
    StackedAutoencoder,
    init_layer,
    load_model,
    save_model,
)
from sdae.pgm import atomic_write_bytes
from sdae.sgd import LayerSpec, SgdConfig, fine_tune, pretrain_stack, train_layer_sgd

EXIT_USAGE, EXIT_DATA, EXIT_IO = 2, 3, 4
LOSSES = {"squared": SQUARED_SIGMOID, "crossentropy": CROSSENTROPY_SOFTMAX}

log = logging.getLogger("sdae")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected a non-empty list of positive integers, got {text!r}")
    return vals


def _layer_spec(text: str) -> tuple[int, float]:
    try:
        hidden, noise = text.split(":")
        return int(hidden), float(noise)
    except ValueError:
        raise argparse.ArgumentTypeError(f"layer spec must look like HIDDEN:NOISE, got {text!r}") from None


def _summary(**kv) -> None:
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in kv.items()))


def _load(args, images="images", labels="labels"):
    ds = load_idx(getattr(args, images), getattr(args, labels))
    count = getattr(args, "count", None)
    if count is not None:
        if count < 1 or count > len(ds):
            raise UsageError(f"--count must lie in [1, {len(ds)}], got {count}")
        ds = ds.subset(0, count)
    return ds


def _add_data(p: argparse.ArgumentParser, count_flag: str = "--count") -> None:
    p.add_argument("--images", required=True, help="IDX image file (optionally gzipped)")
    p.add_argument("--labels", required=True, help="IDX label file (optionally gzipped)")
    p.add_argument(count_flag, dest="count", type=int, help="use only the first N examples")


def _add_ga_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("genetic algorithm (cga/hga); flags override --config")
    g.add_argument("--config", help="flat JSON file of GA settings")
    g.add_argument("--population", type=int)
    g.add_argument("--mutation-rate", type=float)
    g.add_argument("--mutation-amount", type=float, help="Cauchy scale (default 0.1/sqrt(inputs))")
    g.add_argument("--crossover-rate", type=float)
    g.add_argument("--replacement-fraction", type=float)
    g.add_argument("--power-gamma", type=float)
    g.add_argument("--backprop-fraction", type=float, help="share of the population stepped by backprop (hga)")


def _ga_config(args, m: int, epochs: int | None = None) -> GaConfig:
    overrides = {
        "population": args.population, "mutation_rate": args.mutation_rate,
        "mutation_amount": args.mutation_amount, "crossover_rate": args.crossover_rate,
        "replacement_fraction": args.replacement_fraction, "power_gamma": args.power_gamma,
        "backprop_fraction": args.backprop_fraction, "learning_rate": args.lr,
        "epochs": epochs if epochs is not None else args.epochs, "corruption_prob": args.corruption,
        "seed": args.seed, "threads": args.threads,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return load_ga_config(args.config, m, **overrides)
    return default_ga_config(m, **overrides)


def _train_one(optimizer: str, args, X: np.ndarray, hidden: int, epochs: int):
    m = X.shape[1]
    seed = 0 if args.seed is None else args.seed
    if optimizer == "sgd":
        if getattr(args, "config", None):
            raise UsageError("--config applies to cga/hga only")
        cfg = SgdConfig(0.01 if args.lr is None else args.lr, epochs,
                        CorruptionSpec(0.25 if args.corruption is None else args.corruption),
                        args.threads, seed)
        layer = init_layer(m, hidden, np.random.default_rng(cfg.seed))
        rec = train_layer_sgd(layer, X, cfg)
        return layer, rec
    cfg = _ga_config(args, m, epochs)
    template = init_layer(m, hidden, np.random.default_rng(cfg.seed))
    run = run_hga if optimizer == "hga" else run_cga
    return run(template, X, cfg)


# subcommands ---------------------------------------------------------------------------------

def cmd_train(args) -> int:
    ds = _load(args)
    layer, rec = _train_one(args.optimizer, args, ds.images, args.hidden, args.epochs)
    if args.out_model:
        save_model(StackedAutoencoder([layer]), args.out_model)
    if args.out_curve:
        rec.save_csv(args.out_curve)
    _summary(optimizer=args.optimizer, hidden=args.hidden, examples=len(ds), epochs=args.epochs,
             final_error=rec.final_error, seconds=rec.seconds[-1])
    return 0


def cmd_pretrain_finetune(args) -> int:
    ds = _load(args)
    test = None
    if args.test_images or args.test_labels:
        if not (args.test_images and args.test_labels):
            raise UsageError("--test-images and --test-labels go together")
        test = load_idx(args.test_images, args.test_labels)
    specs = []
    for k, (hidden, noise) in enumerate(args.layer):
        cfg = SgdConfig(args.pretrain_lr, args.pretrain_epochs, CorruptionSpec(noise), args.threads, args.seed + k)
        specs.append(LayerSpec(hidden, noise, cfg))
    stack = pretrain_stack(specs, ds)
    out = {"layers": len(specs)}
    if args.head is not None:
        head = list(args.head) + [10]
        cfg = SgdConfig(args.finetune_lr, args.finetune_epochs, CorruptionSpec(0.0), args.threads, args.seed)
        rec = fine_tune(stack, ds, head, cfg, LOSSES[args.loss])
        out["finetune_loss"] = rec.final_error
        out["train_accuracy"] = accuracy(stack, ds, args.threads)
        if test is not None:
            out["test_accuracy"] = accuracy(stack, test, args.threads)
    if args.out_model:
        save_model(stack, args.out_model)
    _summary(**out)
    return 0


def bench_cell(optimizer: str, args, X: np.ndarray, hidden: int, threads: int, epochs: int = 4) -> float:
    """Median seconds per epoch over the epochs after the first (warm-up)."""
    args.threads = threads
    _, rec = _train_one(optimizer, args, X, hidden, epochs)
    return statistics.median(rec.epoch_seconds()[1:])


def cmd_bench(args) -> int:
    ds = _load(args)
    # compile every kernel once so the first cell does not pay for it
    _train_one(args.optimizer, argparse.Namespace(**{**vars(args), "threads": 1}), ds.images[:2], 2, 1)
    rows = ["hidden,threads,optimizer,sec_per_epoch"]
    for hidden in args.hidden_list:
        for t in args.threads_list:
            used = resolve_threads(t)
            if used != t:
                log.warning("requested %d threads, running with %d", t, used)
            sec = bench_cell(args.optimizer, argparse.Namespace(**vars(args)), ds.images, hidden, used)
            rows.append(f"{hidden},{used},{args.optimizer},{sec:.6g}")
            log.info(rows[-1])
    text = "\n".join(rows) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode())
    else:
        sys.stdout.write(text)
    _summary(cells=len(rows) - 1, optimizer=args.optimizer)
    return 0


def cmd_gen_variant(args) -> int:
    ds = _load(args)
    rng = np.random.default_rng(args.seed)
    if args.kind == "bg-rand":
        out = gen_bg_rand(ds, rng)
    elif args.kind == "bg-img":
        if not args.backgrounds:
            raise UsageError("bg-img needs --backgrounds DIR")
        out = gen_bg_img(ds, args.backgrounds, rng)
    else:
        out = gen_rot(ds, rng, args.fixed_angle)
    save_idx(out, args.out_images, args.out_labels)
    _summary(kind=args.kind, examples=len(out), images=args.out_images, labels=args.out_labels)
    return 0


def cmd_export(args) -> int:
    stack = load_model(args.model)
    if not stack.layers:
        raise DataError(f"{args.model} holds no autoencoder layers")
    if args.kind == "filters":
        if not 0 <= args.layer < len(stack.layers):
            raise UsageError(f"--layer must lie in [0, {len(stack.layers) - 1}]")
        count = args.count or min(100, stack.layers[args.layer].hidden_count)
        export_filters(stack.layers[args.layer], count, args.out, args.width, args.height)
        _summary(kind="filters", count=count, out=args.out)
        return 0
    if not (args.images and args.labels):
        raise UsageError(f"{args.kind} export needs --images and --labels")
    ds = load_idx(args.images, args.labels)
    if args.kind == "reconstructions":
        count = min(args.count or 10, len(ds))
        export_reconstructions(stack, ds.images[:count], CorruptionSpec(args.corruption), args.out,
                               np.random.default_rng(args.seed), ds.width, ds.height)
        _summary(kind="reconstructions", count=count, out=args.out)
    else:
        if args.count:
            ds = ds.subset(0, min(args.count, len(ds)))
        export_encoded(stack, ds, args.out, args.threads)
        _summary(kind="features", examples=len(ds), out=args.out)
    return 0


# parser ----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdae", description="Denoising autoencoders trained by SGD, CGA and HGA.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = ap.add_subparsers(dest="command", required=True)

    def common_train(p, lr_help="learning rate (sgd, hga)"):
        p.add_argument("--hidden", type=int, default=500, help="hidden units (default 500)")
        p.add_argument("--epochs", type=int, default=15, help="passes over the data (default 15)")
        p.add_argument("--lr", type=float, help=f"{lr_help}; default 0.01")
        p.add_argument("--corruption", type=float, help="masking probability (default 0.25)")
        p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")

    p = sub.add_parser("train", help="train one denoising layer")
    p.add_argument("optimizer", choices=["sgd", "cga", "hga"])
    _add_data(p)
    common_train(p)
    p.add_argument("--out-model", help="model file to write")
    p.add_argument("--out-curve", help="per-epoch CSV (epoch,seconds,error) to write")
    _add_ga_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain-finetune", help="greedy stacked pretraining, then supervised fine-tuning")
    _add_data(p)
    p.add_argument("--layer", type=_layer_spec, action="append", required=True,
                   help="HIDDEN:NOISE, repeat once per stacked layer")
    p.add_argument("--head", type=_int_list, help="hidden sizes of the classifier head; a 10-way output is appended")
    p.add_argument("--pretrain-epochs", type=int, default=15)
    p.add_argument("--pretrain-lr", type=float, default=0.001)
    p.add_argument("--finetune-epochs", type=int, default=30)
    p.add_argument("--finetune-lr", type=float, default=0.1)
    p.add_argument("--loss", choices=sorted(LOSSES), default="squared", help="head output loss")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model")
    p.set_defaults(func=cmd_pretrain_finetune)

    p = sub.add_parser("bench", help="seconds per epoch over a threads x hidden grid")
    _add_data(p, count_flag="--images-count")
    p.add_argument("--threads-list", type=_int_list, required=True, help="e.g. 1,4,8,16")
    p.add_argument("--hidden-list", type=_int_list, required=True, help="e.g. 500,1000")
    p.add_argument("--optimizer", choices=["sgd", "cga", "hga"], default="sgd")
    p.add_argument("--lr", type=float)
    p.add_argument("--corruption", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV file (default: standard output)")
    _add_ga_flags(p)
    p.set_defaults(func=cmd_bench, threads=None)

    p = sub.add_parser("gen-variant", help="write a bg-rand, bg-img or rot copy of a dataset")
    p.add_argument("kind", choices=["bg-rand", "bg-img", "rot"])
    _add_data(p)
    p.add_argument("--out-images", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--backgrounds", help="directory of binary PGM backgrounds (bg-img)")
    p.add_argument("--fixed-angle", type=float, help="rotate every digit by this angle in radians (rot)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_variant)

    p = sub.add_parser("export", help="filter images, reconstruction grids or encoded features")
    p.add_argument("kind", choices=["filters", "reconstructions", "features"])
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--count", type=int, help="filters/examples to export")
    p.add_argument("--layer", type=int, default=0, help="layer whose filters are drawn")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--corruption", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"sdae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, DimensionError) as exc:
        print(f"sdae: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"sdae: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"sdae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
