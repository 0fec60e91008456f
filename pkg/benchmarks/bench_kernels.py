"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow a full training run on 381 records: 305 training rows,
10 inputs, hidden sizes up to 25 and a handful of fuzzy rules.
"""

import argparse
import timeit

import numpy as np

from tpa_yield import kernels


def cases(rng):
    n, d = 305, 10
    X = rng.normal(size=(n, d))
    y = rng.normal(60, 25, n)
    S = 21
    W1, b1 = rng.normal(size=(S, d)) * 0.3, rng.normal(size=S) * 0.1
    W2, b2 = rng.normal(size=(1, S)), 0.5
    R = 8
    a = rng.uniform(0.5, 2.0, (R, d))
    b = rng.uniform(0.5, 3.0, (R, d))
    c = rng.normal(size=(R, d))
    P = rng.normal(size=(R, d + 1))
    Xn = rng.uniform(size=(n, d))
    return {
        "mlp_loss_grad (305x10, S=21)": ("mlp_loss_grad", (W1, b1, W2, b2, X, y)),
        "anfis_forward (305x10, 8 rules)": ("anfis_forward", (a, b, c, P, X)),
        "anfis_premise_grad (305x10, 8 rules)": ("anfis_premise_grad", (a, b, c, P, X, y)),
        "subclust_potential (305x10)": ("subclust_potential", (Xn, 0.9)),
    }


def best_time(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=50)
    args = parser.parse_args(argv)

    backends = [("numpy", kernels.numpy_backend)]
    if kernels.compiled_backend is not None:
        backends.append((kernels.compiled_backend.NAME, kernels.compiled_backend))
    else:
        print("compiled kernels not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    header = f"{'kernel':40s}" + "".join(f"{name:>14s}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for label, (fname, fargs) in cases(rng).items():
        times = [best_time(getattr(mod, fname), fargs, args.repeat, args.number) for _, mod in backends]
        line = f"{label:40s}" + "".join(f"{t * 1e6:11.1f} us" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
