"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 10000 100000 1000000] [--repeat 5]

Prints the best-of-``repeat`` time per call for each kernel, size and backend,
and checks that both backends return the same result.
"""

import argparse
import timeit

import numpy as np

from fairspk import _kernels_py as pure

try:
    from fairspk import _kernels as compiled
except ImportError:
    compiled = None


def cases(n, rng):
    gen = np.sort(rng.normal(0.6, 0.2, n // 10 or 1))
    imp = np.sort(rng.normal(0.0, 0.2, n))
    taus = np.sort(rng.normal(0.3, 0.3, 37))
    p, g = rng.normal(size=n), rng.normal(size=n)
    m, v = rng.normal(size=n), rng.random(n)

    def adam(mod):
        pp, mm, vv = p.copy(), m.copy(), v.copy()
        mod.adam_update(pp, g, mm, vv, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8, 1 - 1e-7)
        return pp.tobytes() + mm.tobytes() + vv.tobytes()

    return {
        "count_at_or_above": lambda mod: mod.count_at_or_above(imp, taus).tobytes(),
        "eer_sweep": lambda mod: mod.eer_sweep(gen, imp),
        "adam_update": adam,
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    backends = {"python": pure} if compiled is None else {"cython": compiled, "python": pure}
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<20}{'n':>10}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + f"{'speed-up':>10}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            results = {b: fn(mod) for b, mod in backends.items()}
            if len(set(map(repr, results.values()))) != 1:
                raise SystemExit(f"{name} n={n}: backends disagree")
            times = {b: best_time(lambda mod=mod: fn(mod), args.repeat) for b, mod in backends.items()}
            ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
            row = f"{name:<20}{n:>10}" + "".join(f"{1e3 * t:>16.3f}" for t in times.values())
            print(row + f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
