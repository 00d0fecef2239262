"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--number 200]
"""
import argparse
import timeit

import numpy as np

from oimlab.kernels import available_backends
from oimlab.numerics import l2_normalize

SIZES = {"desk": (20, 8, 144), "wide": (256, 128, 5000)}


def cases(b, d, bank_rows, rng):
    x = rng.standard_normal((b, d))
    bank = l2_normalize(rng.standard_normal((bank_rows, d)))
    targets = rng.integers(0, bank_rows, b).astype(np.intp)
    w = rng.random(b)
    w /= w.sum()
    y, _, sigma, floored = available_backends()["python"].weighted_standardize(x, w, 1e-5)
    g = rng.standard_normal((b, d))
    ids = rng.integers(0, bank_rows, b).astype(np.intp)
    momenta = rng.uniform(0.5, 0.9, b)
    feats = l2_normalize(x)
    return {
        "oim_loss_grad": lambda k: k.oim_loss_grad(x, targets, bank, 0.33, 1e-12),
        "weighted_standardize": lambda k: k.weighted_standardize(x, w, 1e-5),
        "standardize_backward": lambda k: k.weighted_standardize_backward(y, sigma, floored, w, g),
        "ema_update_rows": lambda k: k.ema_update_rows(bank.copy(), ids, feats, momenta, 1e-12),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)
    backends = available_backends()
    names = sorted(backends)
    print(f"{'size':<6}{'kernel':<22}" + "".join(f"{n + ' us':>14}" for n in names) + f"{'speedup':>10}")
    for size, dims in SIZES.items():
        for kernel, call in cases(*dims, np.random.default_rng(0)).items():
            best = {}
            for n in names:
                t = timeit.repeat(lambda: call(backends[n]), repeat=args.repeat, number=args.number)
                best[n] = min(t) / args.number * 1e6
            speed = f"{best['python'] / best['cython']:.2f}x" if "cython" in best else "-"
            print(f"{size:<6}{kernel:<22}" + "".join(f"{best[n]:>14.1f}" for n in names) + f"{speed:>10}")


if __name__ == "__main__":
    main()
