"""Kernel twins (numba vs numpy) and backend selection."""

import os
import subprocess
import sys

import numpy as np
import pytest

from kronsbl import _kernels
from kronsbl._kernels import QPSK, am_sweeps_numpy, qpsk_detect_numpy

from oracles import kron_gamma


def run_with_backend(value, code):
    env = dict(os.environ, KRONSBL_BACKEND=value)
    return subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True, env=env)


class TestBackendSelection:
    def test_exports_consistent(self):
        assert _kernels.BACKEND in ("numba", "numpy")
        if _kernels.NUMBA_AVAILABLE:
            assert _kernels.BACKEND == "numba"
            assert _kernels.am_sweeps is _kernels.am_sweeps_numba
            assert _kernels.qpsk_detect is _kernels.qpsk_detect_numba
        else:
            assert _kernels.am_sweeps is _kernels.am_sweeps_numpy

    def test_numpy_override(self):
        proc = run_with_backend(
            "numpy",
            "from kronsbl import _kernels; "
            "assert _kernels.BACKEND == 'numpy'; "
            "assert not _kernels.NUMBA_AVAILABLE; "
            "assert _kernels.am_sweeps is _kernels.am_sweeps_numpy")
        assert proc.returncode == 0, proc.stderr

    def test_invalid_value_rejected_at_import(self):
        proc = run_with_backend("fortran", "import kronsbl")
        assert proc.returncode != 0
        assert "KRONSBL_BACKEND" in proc.stderr


class TestQPSKDetect:
    def test_constellation_is_unit_energy(self):
        assert np.allclose(np.abs(QPSK), 1.0)
        assert QPSK[0] == (1 + 1j) / np.sqrt(2.0)

    def test_exact_symbols_detected(self):
        det = qpsk_detect_numpy(QPSK.copy())
        assert list(det) == [0, 1, 2, 3]

    def test_quadrants(self):
        s = np.array([3 + 0.1j, 0.2 - 5j, -1 + 2j, -0.3 - 0.3j])
        assert list(qpsk_detect_numpy(s)) == [0, 1, 2, 3]

    def test_zero_ties_to_first_symbol(self):
        det = qpsk_detect_numpy(np.zeros(5, dtype=complex))
        assert np.all(det == 0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal(500) + 1j * rng.standard_normal(500)
        det = qpsk_detect_numpy(s)
        ref = np.argmin(np.abs(s[:, None] - QPSK[None, :]), axis=1)
        assert np.array_equal(det, ref.astype(np.uint8))


class TestAMSweeps:
    def test_stationary_on_exact_kronecker(self):
        rng = np.random.default_rng(1)
        dims = (3, 4, 2)
        g1, g2, g3 = (rng.random(n) + 0.2 for n in dims)
        d3 = kron_gamma((g1, g2, g3)).reshape(dims)
        a1, a2, a3 = g1.copy(), g2.copy(), g3.copy()
        sweeps, rel = am_sweeps_numpy(d3, a1, a2, a3, 1e-12, 50, 1e-15)
        assert sweeps == 1
        assert rel < 1e-12
        assert np.allclose(a1 * a2[0] * a3[0], d3[:, 0, 0])

    def test_mutates_in_place_and_reports_change(self):
        rng = np.random.default_rng(2)
        d3 = rng.random((3, 3, 3)) + 0.1
        g1, g2, g3 = np.ones(3), np.ones(3), np.ones(3)
        sweeps, rel = am_sweeps_numpy(d3, g1, g2, g3, 1e-10, 100, 1e-15)
        assert sweeps >= 1
        assert not np.allclose(g1, 1.0)

    def test_floor_respected(self):
        d3 = np.zeros((2, 2, 2))
        d3[0, 0, 0] = 1.0
        g1, g2, g3 = np.ones(2), np.ones(2), np.ones(2)
        am_sweeps_numpy(d3, g1, g2, g3, 1e-10, 20, 1e-9)
        for g in (g1, g2, g3):
            assert np.all(g >= 1e-9)


@pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not importable")
class TestTwinsAgree:
    def test_am_sweeps(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            dims = tuple(rng.integers(2, 6, size=3))
            d3 = rng.random(dims) + 0.05
            init = [rng.random(n) + 0.3 for n in dims]
            a = [v.copy() for v in init]
            b = [v.copy() for v in init]
            s_np, r_np = am_sweeps_numpy(d3, *a, 1e-8, 30, 1e-12)
            s_nb, r_nb = _kernels.am_sweeps_numba(d3, *b, 1e-8, 30, 1e-12)
            assert s_np == s_nb
            assert np.isclose(r_np, r_nb, rtol=1e-10, atol=1e-12)
            for x, y in zip(a, b):
                assert np.allclose(x, y, rtol=1e-12)

    def test_qpsk_detect(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal(1000) + 1j * rng.standard_normal(1000)
        s[::50] = 0.0   # exercise tie handling in both paths
        a = qpsk_detect_numpy(s)
        b = _kernels.qpsk_detect_numba(s)
        assert np.array_equal(a, b)
