"""Hot numeric loops with numba and pure-numpy twins.

Backend is picked once at import from the KRONSBL_BACKEND env var:
"numba" (default) or "numpy".  If numba is requested but not importable
the numpy path is used and NUMBA_AVAILABLE stays False.  Both twins run
the same update order so results agree to rounding.

The solver linear algebra (eigendecompositions, mode products) is
BLAS-bound and stays in numpy/scipy; only the scalar-loop hotspots live
here: the alternating M-step sweeps and QPSK nearest-symbol detection.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .errors import ConfigError

_env = os.environ.get("KRONSBL_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise ConfigError(
        f"KRONSBL_BACKEND must be 'numba' or 'numpy', got {_env!r}"
    )

NUMBA_AVAILABLE = False
if _env != "numpy":
    try:
        import numba

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - depends on environment
        if _env == "numba":
            warnings.warn("KRONSBL_BACKEND=numba but numba is not importable; "
                          "falling back to numpy kernels")

BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"

# QPSK constellation; index 0 first so an all-zero input detects as symbol 0.
QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def am_sweeps_numpy(d3, g1, g2, g3, tol, max_sweeps, floor):
    """Cyclic minimizer sweeps for the factored variance update.

    Each pass updates g1, g2, g3 in turn (Gauss-Seidel) by
    g_j[i] = mean over the other two modes of d3 / (outer product of the
    other factors).  Mutates g1/g2/g3 in place; returns (sweeps, rel)
    where rel is the last relative change of the stacked factors.
    """
    n1, n2, n3 = d3.shape
    rel = np.inf
    sweeps = 0
    for _ in range(max_sweeps):
        num = 0.0
        den = g1 @ g1 + g2 @ g2 + g3 @ g3
        w2 = 1.0 / g2
        w3 = 1.0 / g3
        new1 = np.maximum((d3 @ w3) @ w2 / (n2 * n3), floor)
        num += ((new1 - g1) ** 2).sum()
        g1[:] = new1

        w1 = 1.0 / g1
        new2 = np.maximum(w1 @ (d3 @ w3) / (n1 * n3), floor)
        num += ((new2 - g2) ** 2).sum()
        g2[:] = new2

        w2 = 1.0 / g2
        new3 = np.maximum(w1 @ np.tensordot(d3, w2, axes=(1, 0)) / (n1 * n2), floor)
        num += ((new3 - g3) ** 2).sum()
        g3[:] = new3

        sweeps += 1
        rel = np.sqrt(num / den)
        if rel < tol:
            break
    return sweeps, rel


def qpsk_detect_numpy(s):
    """Nearest-constellation indices for flat complex samples (ties -> 0)."""
    d = np.abs(s[None, :] - QPSK[:, None])
    return np.argmin(d, axis=0).astype(np.uint8)


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def am_sweeps_numba(d3, g1, g2, g3, tol, max_sweeps, floor):
        n1, n2, n3 = d3.shape
        rel = np.inf
        sweeps = 0
        for _ in range(max_sweeps):
            num = 0.0
            den = 0.0
            for a in range(n1):
                den += g1[a] * g1[a]
            for b in range(n2):
                den += g2[b] * g2[b]
            for c in range(n3):
                den += g3[c] * g3[c]

            for a in range(n1):
                s = 0.0
                for b in range(n2):
                    t = 0.0
                    for c in range(n3):
                        t += d3[a, b, c] / g3[c]
                    s += t / g2[b]
                s /= n2 * n3
                if s < floor:
                    s = floor
                num += (s - g1[a]) ** 2
                g1[a] = s

            for b in range(n2):
                s = 0.0
                for a in range(n1):
                    t = 0.0
                    for c in range(n3):
                        t += d3[a, b, c] / g3[c]
                    s += t / g1[a]
                s /= n1 * n3
                if s < floor:
                    s = floor
                num += (s - g2[b]) ** 2
                g2[b] = s

            for c in range(n3):
                s = 0.0
                for a in range(n1):
                    t = 0.0
                    for b in range(n2):
                        t += d3[a, b, c] / g2[b]
                    s += t / g1[a]
                s /= n1 * n2
                if s < floor:
                    s = floor
                num += (s - g3[c]) ** 2
                g3[c] = s

            sweeps += 1
            rel = np.sqrt(num / den)
            if rel < tol:
                break
        return sweeps, rel

    @numba.njit(cache=True)
    def qpsk_detect_numba(s):
        r = np.sqrt(2.0) / 2.0
        out = np.empty(s.shape[0], dtype=np.uint8)
        for i in range(s.shape[0]):
            best = -1
            best_d = np.inf
            for k in range(4):
                cre = r if k < 2 else -r
                cim = r if k % 2 == 0 else -r
                dre = s[i].real - cre
                dim = s[i].imag - cim
                d = dre * dre + dim * dim
                if d < best_d:
                    best_d = d
                    best = k
            out[i] = best
        return out

    am_sweeps = am_sweeps_numba
    qpsk_detect = qpsk_detect_numba
else:
    am_sweeps = am_sweeps_numpy
    qpsk_detect = qpsk_detect_numpy
