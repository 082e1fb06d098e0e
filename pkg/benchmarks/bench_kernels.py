"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--size 320] [--repeat 3]

Times each generator layer's convolution kernels at the given square size,
then a full forward pass of both variants, once per backend.
"""

import argparse
import time

import numpy as np

from lwfuse import kernels
from lwfuse.generator import GeneratorConfig, build_generator, forward_fuse, layer_plan


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def layer_cases(size, rng):
    for variant in ("baseline", "lightweight"):
        for name, role, c_in, c_out in layer_plan(GeneratorConfig(variant)):
            xp = rng.standard_normal((c_in, size + 2, size + 2)).astype(np.float32)
            if role == "conv":
                w = rng.standard_normal((c_out, c_in, 3, 3)).astype(np.float32)
                yield f"{variant}/{name} conv {c_in}->{c_out}", lambda xp=xp, w=w: kernels.conv2d_forward(xp, w)
            elif role == "dsconv":
                dw = rng.standard_normal((c_in, 3, 3)).astype(np.float32)
                pw = rng.standard_normal((c_out, c_in, 1, 1)).astype(np.float32)

                def ds(xp=xp, dw=dw, pw=pw):
                    kernels.conv2d_forward(np.ascontiguousarray(kernels.depthwise_forward(xp, dw)), pw)

                yield f"{variant}/{name} dsconv {c_in}->{c_out}", ds


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=320)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"size {args.size}x{args.size}, best of {args.repeat}; backends: {', '.join(backends)}")
    print(f"{'case':44s}" + "".join(f"{b:>12s}" for b in backends))
    rng = np.random.default_rng(0)
    for label, fn in layer_cases(args.size, rng):
        row = []
        for b in backends:
            kernels.use_backend(b)
            row.append(best_of(fn, args.repeat))
        print(f"{label:44s}" + "".join(f"{t:12.4f}" for t in row))
    ir = rng.random((1, args.size, args.size), dtype=np.float32)
    vi = rng.random((1, args.size, args.size), dtype=np.float32)
    for variant in ("baseline", "lightweight"):
        w = build_generator(GeneratorConfig(variant))
        row = []
        for b in backends:
            kernels.use_backend(b)
            row.append(best_of(lambda: forward_fuse(w, ir, vi), args.repeat))
        print(f"{'forward ' + variant:44s}" + "".join(f"{t:12.4f}" for t in row))
    kernels.use_backend("auto")


if __name__ == "__main__":
    main()
