"""Time the numba and numpy flavours of each hot kernel on GPT-2 small shapes.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Both flavours are imported directly, so ENTROPROBE_DISABLE_NUMBA has no effect
here. Without numba installed, only the numpy column is filled.
"""

import argparse
import json
import statistics
import timeit

import numpy as np

from entroprobe import kernels
from entroprobe._accel import HAS_NUMBA

N, D, H, M = 40, 768, 12, 50257


def cases(rng):
    logits = rng.normal(0, 4, (N, M)).astype(np.float32)
    x = rng.normal(0, 1, (N, D)).astype(np.float32)
    g, b = np.ones(D, np.float32), np.zeros(D, np.float32)
    act = rng.normal(0, 1, (N, 4 * D)).astype(np.float32)
    q, k, v = (rng.normal(0, 1, (H, N, D // H)).astype(np.float32) for _ in range(3))
    scale = 1.0 / np.sqrt(D // H)
    return [
        ("entropy_top1 (40 x 50257)", kernels.entropy_top1_rows_loops, kernels.entropy_top1_rows_numpy, (logits,)),
        ("layer_norm (40 x 768)", kernels.layer_norm_rows_loops, kernels.layer_norm_rows_numpy, (x, g, b, 1e-5)),
        ("gelu (40 x 3072)", kernels.gelu_loops, kernels.gelu_numpy, (act,)),
        ("causal_attention (12 x 40 x 64)", kernels.causal_attention_loops, kernels.causal_attention_numpy,
         (q, k, v, scale)),
    ]


def median_ms(fn, args, repeat):
    fn(*args)  # warm-up, triggers JIT compilation
    times = timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)
    return 1000 * statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", default=None, help="also write results to this file")
    args = ap.parse_args(argv)

    rows = []
    for name, loops, vec, fargs in cases(np.random.default_rng(0)):
        t_np = median_ms(vec, fargs, args.repeat)
        t_nb = median_ms(loops, fargs, args.repeat) if HAS_NUMBA else None
        rows.append({"kernel": name, "numba_ms": t_nb, "numpy_ms": t_np,
                     "speedup": (t_np / t_nb) if t_nb else None})

    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for r in rows:
        nb = f"{r['numba_ms']:10.3f}" if r["numba_ms"] is not None else f"{'-':>10s}"
        sp = f"{r['speedup']:7.2f}x" if r["speedup"] is not None else f"{'-':>8s}"
        print(f"{r['kernel']:34s} {nb} {r['numpy_ms']:10.3f} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
