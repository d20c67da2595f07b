"""Compiled vs numpy kernels: Gram mat-vec and the MH accept loop.

    python benchmarks/bench_kernels.py [--sizes 500,1000,2000] [--modes 3] [--repeat 3]
"""
import argparse
import time

import numpy as np

from cohprop import kernels


def best_of(fn, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return min(t)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,1000,2000")
    ap.add_argument("--modes", type=int, default=3)
    ap.add_argument("--chain", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy path is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'size':>8}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for n in (int(v) for v in args.sizes.split(",")):
        A = 1.5 * (rng.normal(size=(n, args.modes)) + 1j * rng.normal(size=(n, args.modes)))
        V = rng.normal(size=(n, 1)) + 1j * rng.normal(size=(n, 1))
        times = {}
        for b in backends:
            prev = kernels.use_backend(b)
            times[b] = best_of(lambda: kernels.gram_matvec_self(A, V), args.repeat)
            kernels.use_backend(prev)
        sp = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{'gram_matvec_self':<18}{n:>8}" + "".join(f"{times[b]:>11.4f}s" for b in backends) + f"{sp:>9.1f}x")

    lr = rng.normal(size=args.chain)
    lu = np.log(rng.random(args.chain))
    times = {}
    for b in backends:
        prev = kernels.use_backend(b)
        times[b] = best_of(lambda: kernels.mh_chain(lr, lu), args.repeat)
        kernels.use_backend(prev)
    sp = times["python"] / times["compiled"] if "compiled" in times else float("nan")
    print(f"{'mh_chain':<18}{args.chain:>8}" + "".join(f"{times[b]:>11.4f}s" for b in backends) + f"{sp:>9.1f}x")


if __name__ == "__main__":
    main()
