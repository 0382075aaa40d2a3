"""Head-to-head timing of the compiled kernels against the NumPy fallback.

Each kernel runs the same workload on both backends, the outputs are compared
bitwise, and the speedup is reported.  Run from the repo root:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --particles 500000 --repeats 5
"""

import argparse
import time

import numpy as np

from entroflow import kernels
from entroflow import _refkernels


def _compiled():
    try:
        from entroflow import _corekernels
    except ImportError:
        return None
    return _corekernels


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_langevin(core, particles, steps, repeats):
    rng = np.random.default_rng(0)
    noise = rng.standard_normal((steps, particles))
    start = rng.standard_normal(particles)

    def run(impl):
        pos = start.copy()
        impl.langevin_chunk(noise, pos, 1, 1e-3, 0.0316)
        return pos

    t_ref, out_ref = _best_of(lambda: run(_refkernels), repeats)
    t_core, out_core = _best_of(lambda: run(core), repeats)
    agree = np.array_equal(out_ref, out_core)
    return "langevin_chunk", t_ref, t_core, agree


def bench_fp(core, cells, steps, repeats):
    lo, hi = -6.0, 6.0
    dx = (hi - lo) / cells
    centers = lo + (np.arange(cells) + 0.5) * dx
    rho0 = np.exp(-0.5 * (centers - 1.0) ** 2 / 0.25)
    rho0 /= rho0.sum() * dx
    faces = centers[:-1] + 0.5 * dx
    drift = -faces  # quadratic well, downhill drift on the faces
    dt = 0.4 * dx * dx / (2 * 0.5 + dx * np.abs(faces).max())

    def run(impl):
        rho = rho0.copy()
        clipped = impl.fp_chunk(rho, drift, 0.5, dx, dt, steps)
        return clipped, rho

    t_ref, (c_ref, r_ref) = _best_of(lambda: run(_refkernels), repeats)
    t_core, (c_core, r_core) = _best_of(lambda: run(core), repeats)
    agree = c_ref == c_core and np.array_equal(r_ref, r_core)
    return "fp_chunk", t_ref, t_core, agree


def bench_hopfield(core, units, sweeps, repeats):
    rng = np.random.default_rng(1)
    patterns = rng.choice([-1.0, 1.0], size=(units // 10, units))
    w = patterns.T @ patterns / units
    np.fill_diagonal(w, 0.0)
    z0 = patterns[0].copy()
    z0[: units // 4] *= -1.0

    def run(impl):
        z = z0.copy()
        h = w @ z
        energies = np.empty(sweeps)
        flips, e = impl.hopfield_seq_sweep(w, z, h, sweeps, energies, -0.5 * z0 @ (w @ z0))
        return flips, e, z, energies

    t_ref, out_ref = _best_of(lambda: run(_refkernels), repeats)
    t_core, out_core = _best_of(lambda: run(core), repeats)
    agree = (out_ref[0] == out_core[0] and out_ref[1] == out_core[1]
             and np.array_equal(out_ref[2], out_core[2])
             and np.array_equal(out_ref[3], out_core[3]))
    return "hopfield_seq_sweep", t_ref, t_core, agree


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--particles", type=int, default=200_000)
    parser.add_argument("--chunk-steps", type=int, default=50)
    parser.add_argument("--cells", type=int, default=2048)
    parser.add_argument("--fp-steps", type=int, default=2000)
    parser.add_argument("--units", type=int, default=1500)
    parser.add_argument("--sweeps", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    core = _compiled()
    print(f"active backend: {kernels.BACKEND}")
    if core is None:
        print("[SKIP] compiled extension not importable; nothing to compare")
        return 0

    rows = [
        bench_langevin(core, args.particles, args.chunk_steps, args.repeats),
        bench_fp(core, args.cells, args.fp_steps, args.repeats),
        bench_hopfield(core, args.units, args.sweeps, args.repeats),
    ]

    print(f"{'kernel':<22} {'numpy (s)':>10} {'compiled (s)':>12} "
          f"{'speedup':>8}  agree")
    failures = 0
    for name, t_ref, t_core, agree in rows:
        speedup = t_ref / t_core if t_core > 0 else float("inf")
        print(f"{name:<22} {t_ref:>10.4f} {t_core:>12.4f} {speedup:>7.1f}x  "
              f"{'yes' if agree else 'NO'}")
        if not agree:
            failures += 1
    if failures:
        print(f"[FAIL] {failures} kernel(s) disagree between backends")
        return 1
    print("[PASS] all kernels agree bitwise between backends")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
