"""Command-line interface.

Exit codes: 0 ok, 2 I/O or file format, 3 shape, 4 config/arguments,
5 gradient check failed, 6 dataset.
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import fileio, kernels
from .errors import ArgumentError, DatasetError, FusionError, ShapeError
from .generator import VARIANTS, GeneratorConfig, build_generator, cost_report, forward_fuse

EXIT_IO = 2
EXIT_CONFIG = 4
EXIT_GRADCHECK = 5
MIN_RUNS = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _size(text):
    if text.lower() == "none":
        return None
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return w, h


def _widths(text):
    return tuple(int(v) for v in text.split(","))


def _add_config(p, variant=True):
    if variant:
        p.add_argument("--variant", choices=VARIANTS, default="lightweight")
    p.add_argument("--base-width", type=int, default=32)
    p.add_argument("--dense-layers", type=int, default=3)
    p.add_argument("--decoder-widths", type=_widths, default=(64, 32, 1))


def _config(args, variant=None):
    return GeneratorConfig(variant or args.variant, args.base_width, args.dense_layers, args.decoder_widths)


def _load_weights(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"weight file not found: {path}")
    return fileio.load_weights(path)


# ---------------------------------------------------------------- commands

def cmd_init(args):
    cfg = _config(args)
    w = build_generator(cfg, args.seed)
    if args.zeros:
        w = w.zeros_like()
    fileio.save_weights(w, args.out)
    print(f"wrote {args.out}: {cfg.variant}, {w.n_params()} parameters")
    return 0


def cmd_fuse(args):
    weights = _load_weights(args.weights)
    ir, vi = fileio.read_gray(args.ir), fileio.read_gray(args.vi)
    if args.resize is not None:
        w, h = args.resize
        ir, vi = fileio.resize_bilinear(ir, h, w), fileio.resize_bilinear(vi, h, w)
    if ir.shape != vi.shape:
        raise ShapeError(f"ir {ir.shape} and vi {vi.shape} differ; pass --resize WxH")
    t0 = time.perf_counter()
    fused = forward_fuse(weights, ir[None], vi[None])
    elapsed = time.perf_counter() - t0
    fileio.write_gray(fused, args.out)
    print(f"fused {ir.shape[1]}x{ir.shape[0]} with {weights.config.variant} in {elapsed:.3f}s -> {args.out}")
    return 0


def _metric_row(name, f, ir, vi):
    from .metrics import evaluate_all

    return name, evaluate_all(f, ir, vi)


def cmd_metrics(args):
    from .metrics import reports_to_csv

    if args.dataset:
        if not args.fused_dir:
            raise ArgumentError("--dataset needs --fused-dir")
        pairs = fileio.load_pairs(args.dataset)
        fused_index = {p.stem: p for p in Path(args.fused_dir).iterdir()
                       if p.suffix.lower() in fileio.IMAGE_SUFFIXES}
        missing = [p.name for p in pairs if p.name not in fused_index]
        if missing:
            raise DatasetError(f"no fused image for: {', '.join(missing)}")
        if not pairs:
            raise DatasetError(f"{args.dataset}: no image pairs found")
        jobs = [(p.name, fileio.read_gray(fused_index[p.name]), p.ir, p.vi) for p in pairs]
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(lambda j: _metric_row(*j), jobs))  # map keeps pair order
        sys.stdout.write(reports_to_csv(rows, with_mean=True))
        return 0
    if not (args.fused and args.ir and args.vi):
        raise ArgumentError("give FUSED IR VI, or --dataset ROOT --fused-dir DIR")
    f, ir, vi = (fileio.read_gray(p) for p in (args.fused, args.ir, args.vi))
    sys.stdout.write(reports_to_csv([_metric_row(Path(args.fused).stem, f, ir, vi)]))
    return 0


def cmd_params(args):
    w, h = args.size
    if args.compare:
        base = cost_report(_config(args, "baseline"), h, w)
        light = cost_report(_config(args, "lightweight"), h, w)
        print("variant,params,macs")
        print(f"baseline,{base.params},{base.macs}")
        print(f"lightweight,{light.params},{light.macs}")
        print(f"reduction_percent,{100 * (1 - light.params / base.params):.2f},"
              f"{100 * (1 - light.macs / base.macs):.2f}")
        return 0
    rep = cost_report(_config(args), h, w)
    print("layer,role,c_in,c_out,params,macs")
    for r in rep.per_layer:
        print(f"{r.name},{r.role},{r.c_in},{r.c_out},{r.params},{r.macs}")
    print(f"total,,,,{rep.params},{rep.macs}")
    return 0


@dataclass
class BenchResult:
    variant: str
    size: tuple
    backend: str
    samples: list
    mean: float
    min: float
    max: float
    macs: int


def bench(weights, width, height, runs=MIN_RUNS, seed=0):
    """Time ``runs`` forward passes after one discarded warmup."""
    if runs < MIN_RUNS:
        raise ArgumentError(f"runs must be ≥ {MIN_RUNS}")
    rng = np.random.default_rng(seed)
    ir = rng.random((1, height, width), dtype=np.float32)
    vi = rng.random((1, height, width), dtype=np.float32)
    forward_fuse(weights, ir, vi)
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        forward_fuse(weights, ir, vi)
        samples.append(time.perf_counter() - t0)
    return BenchResult(weights.config.variant, (width, height), kernels.backend, samples,
                       float(np.mean(samples)), min(samples), max(samples),
                       cost_report(weights, height, width).macs)


def cmd_bench(args):
    if args.runs < MIN_RUNS:
        raise ArgumentError(f"runs must be ≥ {MIN_RUNS}")
    weights = _load_weights(args.weights)
    kernels.use_backend(args.backend)
    w, h = args.size
    r = bench(weights, w, h, args.runs)
    print("variant,width,height,backend,run,seconds")
    for i, s in enumerate(r.samples):
        print(f"{r.variant},{w},{h},{r.backend},{i},{s:.6f}")
    print(f"# mean={r.mean:.6f} min={r.min:.6f} max={r.max:.6f} macs={r.macs}")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import CASES, TOLERANCE, run_gradcheck

    corrupt = tuple(args.corrupt_op or ())
    unknown = [c for c in corrupt if c not in CASES]
    if unknown:
        raise ArgumentError(f"unknown op(s): {', '.join(unknown)}")
    worst = run_gradcheck(args.seed, args.instances, corrupt)
    print("op,worst_relative_error,status")
    failed = []
    for name, err in worst.items():
        ok = err < TOLERANCE
        if not ok:
            failed.append(name)
        print(f"{name},{err:.3e},{'ok' if ok else 'FAIL'}")
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return 0


def cmd_train_toy(args):
    from .train import synthetic_pairs, train_toy

    if args.synthetic is not None:
        dataset = synthetic_pairs(args.synthetic, args.size[0], args.seed)
    else:
        w, h = args.size
        dataset = [(fileio.resize_bilinear(p.ir, h, w)[None], fileio.resize_bilinear(p.vi, h, w)[None])
                   for p in fileio.load_pairs(args.dataset)]
    if not dataset:
        raise DatasetError("training dataset is empty")
    log = (lambda s, l: print(f"step {s}: loss {l:.6f}", file=sys.stderr)) if args.verbose else None
    weights, curve = train_toy(_config(args), dataset, args.steps, args.opt, args.seed,
                               lr_scale=args.lr_scale, callback=log)
    fileio.save_weights(weights, args.out)
    Path(args.curve).write_text(curve.to_csv())
    print(f"initial loss {curve.losses[0]:.6f}, final loss {curve.losses[-1]:.6f}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser():
    p = _Parser(prog="lwfuse", description="Lightweight IR/visible image fusion toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("init", help="write freshly initialised generator weights")
    _add_config(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--zeros", action="store_true", help="all-zero weights (output is constant 0.5)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("fuse", help="fuse one IR/visible pair")
    s.add_argument("weights")
    s.add_argument("ir")
    s.add_argument("vi")
    s.add_argument("out")
    s.add_argument("--resize", type=_size, default=(320, 320), help="WxH, or 'none' (default 320x320)")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("metrics", help="EN, MI, SF, AG, PSNR, SSIM as CSV")
    s.add_argument("fused", nargs="?")
    s.add_argument("ir", nargs="?")
    s.add_argument("vi", nargs="?")
    s.add_argument("--dataset")
    s.add_argument("--fused-dir")
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("params", help="parameter and MAC counts")
    _add_config(s)
    s.add_argument("--size", type=_size, default=(320, 320))
    s.add_argument("--compare", action="store_true", help="baseline vs lightweight totals")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("bench", help="time forward passes")
    s.add_argument("weights")
    s.add_argument("--size", type=_size, default=(320, 320))
    s.add_argument("--runs", type=int, default=MIN_RUNS)
    s.add_argument("--backend", choices=("auto",) + kernels.BACKENDS, default="auto")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gradcheck", help="finite-difference check of every op")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=5)
    s.add_argument("--corrupt-op", action="append", metavar="OP",
                   help="test hook: perturb the analytic gradient of OP")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("train-toy", help="small deterministic training run")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="root with ir/ and vi/ subdirectories")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic pairs")
    _add_config(s)
    s.add_argument("--size", type=_size, default=(32, 32), help="training resolution WxH")
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--opt", choices=("sgd", "adamw"), default="adamw")
    s.add_argument("--lr-scale", type=float, default=1.0, help="multiplier on the 0.01->0.1 schedule")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--curve", required=True)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_train_toy)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors (4) and --help (0)
        return exc.code
    try:
        return args.func(args)
    except FusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
