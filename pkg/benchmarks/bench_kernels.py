"""Timing comparison of the numba kernels against their numpy twins.

Run as a script:

    python3 benchmarks/bench_kernels.py

Micro-benchmarks call both twins directly in one process; the
end-to-end section re-runs a full AM estimate in a subprocess per
KRONSBL_BACKEND value so the backend choice is exercised the same way
users hit it (at import).
"""

import os
import subprocess
import sys
import time

import numpy as np

from kronsbl import _kernels
from kronsbl._kernels import am_sweeps_numpy, qpsk_detect_numpy


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_am_sweeps(dims, sweeps=50):
    rng = np.random.default_rng(0)
    d3 = rng.random(dims) + 0.05
    init = [rng.random(n) + 0.3 for n in dims]

    def run(fn):
        work = [v.copy() for v in init]
        fn(d3, *work, 0.0, sweeps, 1e-12)   # tol 0 forces all sweeps

    t_np = best_of(lambda: run(am_sweeps_numpy))
    line = f"am_sweeps {dims} x{sweeps}: numpy {t_np * 1e3:8.2f} ms"
    if _kernels.NUMBA_AVAILABLE:
        run(_kernels.am_sweeps_numba)       # compile outside the timing
        t_nb = best_of(lambda: run(_kernels.am_sweeps_numba))
        line += f"   numba {t_nb * 1e3:8.2f} ms   speedup {t_np / t_nb:5.2f}x"
    print(line)


def bench_qpsk(n):
    rng = np.random.default_rng(1)
    s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    t_np = best_of(lambda: qpsk_detect_numpy(s))
    line = f"qpsk_detect n={n}: numpy {t_np * 1e3:8.2f} ms"
    if _kernels.NUMBA_AVAILABLE:
        _kernels.qpsk_detect_numba(s)
        t_nb = best_of(lambda: _kernels.qpsk_detect_numba(s))
        line += f"   numba {t_nb * 1e3:8.2f} ms   speedup {t_np / t_nb:5.2f}x"
    print(line)


END_TO_END = """
import time
import numpy as np
from kronsbl import _kernels
from kronsbl.channel import SystemConfig, synth_channels, gen_measurements, build_dictionary
from kronsbl.solvers import SolverConfig, kro_sbl_estimate

cfg = SystemConfig(B=16, M=6, L=256, N=18, K_I=4, K_P=6,
                   P_MS=2, P_BS=2, sigma2=1e-2, seed=0)
rng = np.random.default_rng(0)
truth = synth_channels(cfg, rng)
meas = gen_measurements(cfg, truth, rng, snr_db=20.0)
dic = build_dictionary(cfg, meas.x, meas.theta)
scfg = SolverConfig(variant="am", r_max=200, epsilon=1e-12)  # fixed work
kro_sbl_estimate(dic, meas.y_tilde, meas.sigma2, scfg)       # warm caches
t0 = time.perf_counter()
res = kro_sbl_estimate(dic, meas.y_tilde, meas.sigma2, scfg)
print(f"{_kernels.BACKEND}: {time.perf_counter() - t0:.3f}s "
      f"for {res.iterations} AM iterations")
"""


def bench_end_to_end():
    for backend in ("numpy", "numba"):
        env = dict(os.environ, KRONSBL_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", END_TO_END],
                              capture_output=True, text=True, env=env)
        out = proc.stdout.strip() or proc.stderr.strip()
        print(f"  KRONSBL_BACKEND={backend}: {out}")


def main():
    print(f"backend: {_kernels.BACKEND} (numba available: {_kernels.NUMBA_AVAILABLE})")
    print()
    print("-- M-step sweep kernel --")
    bench_am_sweeps((18, 18, 18))
    bench_am_sweeps((6, 6, 6))
    print()
    print("-- QPSK detection kernel --")
    bench_qpsk(100_000)
    bench_qpsk(4_000)
    print()
    print("-- end-to-end AM estimate (dictionary 384 x 5832, 200 iterations) --")
    bench_end_to_end()


if __name__ == "__main__":
    main()
