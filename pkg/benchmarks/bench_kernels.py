"""Time the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--nodes 200000] [--repeat 5]

Prints one line per (kernel, d) with the best wall time of each
implementation and the speed-up.  Both implementations are also checked to
agree bit for bit on the benchmark inputs.
"""

import argparse
import timeit

import numpy as np

from orbsde import kernels


def inputs(nodes, d, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.random((nodes, d))
    costs = np.abs(pos[:, :, None] - pos[:, None, :]) + 0.1 * (1 - np.eye(d))
    y = rng.standard_normal((nodes, d))
    dec = rng.integers(0, d, size=(nodes, d))
    mode = rng.integers(0, d, size=nodes)
    return costs, y, dec, mode


def cases(costs, y, dec, mode, d):
    return {
        "project": lambda impl: kernels.project(costs, y, impl=impl),
        "best_switch": lambda impl: kernels.best_switch(costs, y, impl=impl),
        "in_domain": lambda impl: kernels.in_domain(costs, y, 1e-10, impl=impl),
        "switch_chain": lambda impl: kernels.apply_switch_chain(dec, mode, costs, d - 1,
                                                                impl=impl),
    }


def _parts(result):
    return result if isinstance(result, tuple) else (result,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = kernels.implementations()
    if "compiled" not in impls:
        print("compiled kernels unavailable; only the numpy fallback is installed")
    print(f"{'kernel':<14}{'d':>3}" + "".join(f"{name:>14}" for name in impls) + f"{'speed-up':>10}")
    for d in (2, 3, 5):
        data = inputs(args.nodes, d)
        for name, fn in cases(*data, d).items():
            times, results = {}, {}
            for label, mod in impls.items():
                results[label] = fn(mod)
                times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            ref = _parts(results["python"])
            for label, res in results.items():
                if not all(np.array_equal(a, b) for a, b in zip(ref, _parts(res))):
                    raise SystemExit(f"{name} d={d}: {label} disagrees with python")
            speed = (times["python"] / times["compiled"]) if "compiled" in times else 1.0
            print(f"{name:<14}{d:>3}" + "".join(f"{times[k] * 1e3:>12.2f}ms" for k in impls)
                  + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
