"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat R]``.  Prints the
best-of-R time per call for each kernel and backend, the speed-up, and the
largest disagreement between the two results.
"""
import argparse
import timeit

import numpy as np

from adapid import kernels
from adapid.identifier import IdentifierConfig, SolverSettings, run
from adapid.losses import LossSpec


def cases(rng):
    X = rng.uniform(-1, 1, (300, 4))
    y = rng.normal(size=300)
    w = 0.95 ** np.arange(299, -1, -1.0)
    theta = rng.normal(size=4)
    thetas = rng.normal(size=(64, 4))
    e = rng.normal(size=100_000)
    inc = rng.uniform(size=100_000)
    for label, kind, param in (("power p=2", kernels.POWER, 2.0),
                               ("power p=0.5", kernels.POWER, 0.5),
                               ("huber h=1", kernels.HUBER, 1.0)):
        yield f"loss_values {label} (1e5)", "loss_values", (kind, param, 1.0, e)
        yield f"loss_derivatives {label} (1e5)", "loss_derivatives", (kind, param, 1.0, e)
        yield f"data_term {label} (300x4)", "data_term", (kind, param, 1.0, X, y, w, theta)
        yield (f"data_values {label} (300x4, 64 pts)", "data_values",
               (kind, param, 1.0, X, y, w, thetas))
    yield "forgetting_scan (1e5)", "forgetting_scan", (0.95, 1.0, inc)
    yield "sliding_sums T=50 (1e5)", "sliding_sums", (inc, 50)


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, z) for x, z in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - b))) / scale


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def bench_identifier(repeat):
    """End-to-end: one 300-step p = 1 identifier run per backend."""
    import adapid.identifier as ident

    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (300, 2))
    y = X @ [1.0, -0.5] + rng.uniform(-0.1, 0.1, 300)
    cfg = IdentifierConfig(lam=0.9, psi=LossSpec.power(1.0), psi0=LossSpec.scaled_sq_norm(1.0),
                           theta0=np.zeros(2), solver=SolverSettings(mode="irls"))
    out = {}
    saved = {k: getattr(kernels, k) for k in ("data_term", "data_values", "loss_derivatives")}
    try:
        for name, mod in kernels.backends().items():
            for k in saved:
                setattr(kernels, k, getattr(mod, k))
            out[name] = min(timeit.repeat(lambda: run(cfg, X, y), number=1,
                                          repeat=max(1, repeat // 2)))
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)
    assert ident.kernels is kernels
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backs = kernels.backends()
    if "cython" not in backs:
        print("compiled extension not built; run: python3 setup.py build_ext --inplace")
        return
    cy, py = backs["cython"], backs["python"]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<44} {'cython':>10} {'python':>10} {'speedup':>8} {'max diff':>9}")
    for label, name, a in cases(rng):
        tc = best_time(getattr(cy, name), a, args.repeat)
        tp = best_time(getattr(py, name), a, args.repeat)
        diff = max_diff(getattr(cy, name)(*a), getattr(py, name)(*a))
        print(f"{label:<44} {tc * 1e6:>8.1f}us {tp * 1e6:>8.1f}us {tp / tc:>7.1f}x {diff:>9.1e}")
    t = bench_identifier(args.repeat)
    print(f"{'identifier run p=1, 300 steps':<44} {t['cython']:>9.2f}s {t['python']:>9.2f}s "
          f"{t['python'] / t['cython']:>7.1f}x")


if __name__ == "__main__":
    main()
