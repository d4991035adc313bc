"""E-step correctness against dense reference computations."""

import numpy as np
import pytest

from kronsbl.channel import SystemConfig, build_dictionary, gen_measurements, synth_channels
from kronsbl.errors import ConfigError
from kronsbl.solvers import HyperParams, _estep_full, _estep_kron, e_step_fast, e_step_full

from oracles import (
    complex_gaussian,
    dense_from_factors,
    kron_gamma,
    random_factors,
    random_hyper,
    reference_nll,
    reference_posterior,
)


def random_instance(rng):
    dims_in = tuple(rng.integers(2, 5, size=3))
    dims_out = tuple(rng.integers(2, 4, size=3))
    factors = random_factors(rng, dims_out, dims_in)
    y = complex_gaussian(rng, int(np.prod(dims_out)))
    sigma2 = float(rng.uniform(0.01, 1.0))
    return factors, y, sigma2, dims_in


class TestFastEStep:
    def test_matches_dense_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            factors, y, sigma2, dims_in = random_instance(rng)
            hyper = HyperParams(*random_hyper(rng, dims_in))
            post, nll = _estep_kron(factors, y, hyper, sigma2)
            h = dense_from_factors(factors)
            mu_ref, var_ref = reference_posterior(h, y, hyper.product(), sigma2)
            assert np.allclose(post.mu, mu_ref, atol=1e-10)
            assert np.allclose(post.sigma_diag, var_ref, atol=1e-10)
            assert np.isclose(nll, reference_nll(h, y, hyper.product(), sigma2),
                              rtol=1e-10, atol=1e-8)

    def test_handles_exact_zero_variances(self):
        # hard zeros in a factor prior must zero the matching posterior
        # entries without dividing by them anywhere
        rng = np.random.default_rng(1)
        for _ in range(10):
            factors, y, sigma2, dims_in = random_instance(rng)
            parts = random_hyper(rng, dims_in, sparsity=2)
            hyper = HyperParams(*parts)
            post, _ = _estep_kron(factors, y, hyper, sigma2)
            assert np.all(np.isfinite(post.mu))
            dead = kron_gamma(parts) == 0.0
            assert np.all(post.mu[dead] == 0.0)
            assert np.all(post.sigma_diag[dead] == 0.0)
            h = dense_from_factors(factors)
            mu_ref, var_ref = reference_posterior(h, y, kron_gamma(parts), sigma2)
            assert np.allclose(post.mu, mu_ref, atol=1e-10)
            assert np.allclose(post.sigma_diag, var_ref, atol=1e-10)

    def test_variance_bounds(self):
        # marginal posterior variance never exceeds the prior variance
        rng = np.random.default_rng(2)
        factors, y, sigma2, dims_in = random_instance(rng)
        hyper = HyperParams(*random_hyper(rng, dims_in))
        post = e_step_fast(factors, y, hyper, sigma2)
        gam = hyper.product()
        assert np.all(post.sigma_diag >= 0.0)
        assert np.all(post.sigma_diag <= gam + 1e-15)
        assert np.allclose(post.second_moment,
                           post.sigma_diag + np.abs(post.mu) ** 2)

    def test_accepts_dictionary_objects(self):
        cfg = SystemConfig(B=4, M=3, L=12, N=5, K_I=3, K_P=3,
                           P_MS=2, P_BS=2, sigma2=1e-2, seed=3)
        rng = np.random.default_rng(3)
        truth = synth_channels(cfg, rng)
        meas = gen_measurements(cfg, truth, rng)
        dic = build_dictionary(cfg, meas.x, meas.theta)
        hyper = HyperParams.ones((cfg.N, cfg.N, cfg.N))
        via_dic = e_step_fast(dic, meas.y_tilde, hyper, meas.sigma2)
        via_tuple = e_step_fast((dic.phi_l, dic.phi_m, dic.phi_b),
                                meas.y_tilde, hyper, meas.sigma2)
        assert np.allclose(via_dic.mu, via_tuple.mu)
        mu_ref, var_ref = reference_posterior(
            dic.operator.dense(), meas.y_tilde, hyper.product(), meas.sigma2)
        assert np.allclose(via_dic.mu, mu_ref, atol=1e-9)
        assert np.allclose(via_dic.sigma_diag, var_ref, atol=1e-9)

    def test_rejects_nonpositive_noise(self):
        rng = np.random.default_rng(4)
        factors, y, _, dims_in = random_instance(rng)
        hyper = HyperParams(*random_hyper(rng, dims_in))
        with pytest.raises(ConfigError):
            _estep_kron(factors, y, hyper, 0.0)


class TestFullEStep:
    def test_matches_dense_reference(self):
        # the measurement-sized Cholesky path equals direct inversion
        # for arbitrary (non-Kronecker) dictionaries
        rng = np.random.default_rng(5)
        for _ in range(20):
            n_meas = int(rng.integers(4, 12))
            n_col = int(rng.integers(6, 30))
            h = complex_gaussian(rng, (n_meas, n_col))
            y = complex_gaussian(rng, n_meas)
            gamma = rng.random(n_col) + 0.05
            sigma2 = float(rng.uniform(0.01, 1.0))
            post, nll = _estep_full(h, y, gamma, sigma2)
            mu_ref, var_ref = reference_posterior(h, y, gamma, sigma2)
            assert np.allclose(post.mu, mu_ref, atol=1e-10)
            assert np.allclose(post.sigma_diag, var_ref, atol=1e-10)
            assert np.isclose(nll, reference_nll(h, y, gamma, sigma2),
                              rtol=1e-10, atol=1e-8)

    def test_agrees_with_fast_path_on_kron_prior(self):
        rng = np.random.default_rng(6)
        factors, y, sigma2, dims_in = random_instance(rng)
        parts = random_hyper(rng, dims_in)
        hyper = HyperParams(*parts)
        fast, nll_fast = _estep_kron(factors, y, hyper, sigma2)
        full, nll_full = _estep_full(dense_from_factors(factors), y,
                                     kron_gamma(parts), sigma2)
        assert np.allclose(fast.mu, full.mu, atol=1e-10)
        assert np.allclose(fast.sigma_diag, full.sigma_diag, atol=1e-10)
        assert np.isclose(nll_fast, nll_full, rtol=1e-10)

    def test_public_wrapper(self):
        rng = np.random.default_rng(7)
        h = complex_gaussian(rng, (5, 9))
        y = complex_gaussian(rng, 5)
        gamma = rng.random(9) + 0.1
        post = e_step_full(h, y, gamma, 0.3)
        mu_ref, var_ref = reference_posterior(h, y, gamma, 0.3)
        assert np.allclose(post.mu, mu_ref, atol=1e-10)
        assert np.allclose(post.sigma_diag, var_ref, atol=1e-10)

    def test_rejects_nonpositive_noise(self):
        rng = np.random.default_rng(8)
        h = complex_gaussian(rng, (4, 6))
        with pytest.raises(ConfigError):
            _estep_full(h, complex_gaussian(rng, 4), np.ones(6), -1.0)
