"""Sieve estimators: exact recovery, invariances, variance, diagnostics."""

import json

import numpy as np
import pytest

from otmatch.bernstein import BernsteinTensor
from otmatch.errors import DataError, DimensionError
from otmatch.estimators import (
    EstimateReport,
    MatchedSample,
    Theta,
    bic_score,
    estimate_sigma0,
    report_from_json,
    residuals,
    sgls_fit,
    sls_fit,
    sml_fit,
    variance_theta,
)
from otmatch.gaussian import draw_gaussian_equilibrium
from otmatch.ot import ProductionTech

TECH = ProductionTech.diagonal(0.5, 0.2, 1.7, -0.4)
TRUE_THETA = np.array([2.0, 5.0, 1.7, -0.4])  # kappa parameterization


def in_span_sample(n=400, seed=0, noise=0.0):
    """Data generated exactly from a sieve-representable convex wage."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n, 2))
    basis = BernsteinTensor(4, 4, np.array([-2.1, -2.1]), np.array([2.1, 2.1]))
    jc = np.repeat(np.arange(5), 5) / 4.0
    jm = np.tile(np.arange(5), 5) / 4.0
    gamma = 3.0 * (jc - 0.4) ** 2 + 2.0 * (jm - 0.5) ** 2 + 0.5 * jc * jm
    kappa_c, kappa_m, beta_c, beta_m = TRUE_THETA
    w = basis.evaluate(gamma, X) + X @ [beta_c, beta_m]
    grad = basis.gradient(gamma, X)
    Y = np.column_stack([kappa_c * grad[:, 0], kappa_m * grad[:, 1]])
    if noise > 0:
        w = w + noise * rng.normal(size=n)
        Y = Y + noise * rng.normal(size=(n, 2))
    return MatchedSample(w, X, Y), basis, gamma


def gaussian_sample(n=800, seed=0):
    rng = np.random.default_rng(seed)
    eq = draw_gaussian_equilibrium(n, TECH, -0.4, -0.5, c=30.0, rng=rng)
    w = eq.W_star + 2.0 * rng.normal(size=n)
    Y = eq.Y_star + rng.normal(size=(n, 2))
    return MatchedSample(w, eq.X, Y)


class TestTypes:
    def test_theta_alpha(self):
        th = Theta(2.0, 5.0, 0.0, 0.0)
        assert th.alpha_cc == pytest.approx(0.5)
        assert th.alpha_mm == pytest.approx(0.2)

    def test_theta_zero_kappa_rejected(self):
        with pytest.raises(ValueError):
            Theta(0.0, 1.0, 0.0, 0.0)

    def test_sample_validation(self):
        with pytest.raises(DimensionError):
            MatchedSample(np.zeros(3), np.zeros((4, 2)), np.zeros((3, 2)))
        with pytest.raises(DataError):
            MatchedSample(np.array([np.nan]), np.zeros((1, 2)), np.zeros((1, 2)))


class TestResiduals:
    def test_zero_at_truth(self):
        sample, basis, gamma = in_span_sample()
        theta = Theta(*TRUE_THETA)
        r = residuals(sample, theta, basis, gamma)
        np.testing.assert_allclose(r, 0.0, atol=1e-10)

    def test_stored_gamma(self):
        sample, basis, gamma = in_span_sample()
        theta = Theta(*TRUE_THETA)
        r = residuals(sample, theta, basis.with_gamma(gamma))
        np.testing.assert_allclose(r, 0.0, atol=1e-10)


@pytest.mark.parametrize("fitter", [sls_fit, sgls_fit, sml_fit])
class TestExactRecovery:
    def test_noiseless_recovery(self, fitter):
        sample, _, _ = in_span_sample(n=400, seed=1)
        report = fitter(sample, degrees=(4, 4))
        est = np.array(
            [
                report.theta.kappa_c,
                report.theta.kappa_m,
                report.theta.beta_c,
                report.theta.beta_m,
            ]
        )
        np.testing.assert_allclose(est, TRUE_THETA, atol=1e-6)
        if fitter is sls_fit:
            assert report.objective <= 1e-9 * sample.n

    def test_convexity_feasible(self, fitter):
        sample, _, _ = in_span_sample(n=300, seed=2, noise=0.3)
        report = fitter(sample, degrees=(4, 4), convexity=True)
        C = report.gamma.convexity_constraints()
        assert (C @ report.gamma.gamma).min() > -1e-10


class TestInvariances:
    def test_wage_location(self):
        sample, _, _ = in_span_sample(n=300, seed=3, noise=0.2)
        shifted = MatchedSample(sample.w + 250.0, sample.X, sample.Y)
        r1 = sls_fit(sample)
        r2 = sls_fit(shifted)
        for attr in ("kappa_c", "kappa_m", "beta_c", "beta_m"):
            assert getattr(r2.theta, attr) == pytest.approx(
                getattr(r1.theta, attr), abs=1e-5
            )

    def test_permutation(self):
        sample, _, _ = in_span_sample(n=250, seed=4, noise=0.2)
        perm = np.random.default_rng(0).permutation(sample.n)
        shuffled = MatchedSample(sample.w[perm], sample.X[perm], sample.Y[perm])
        r1 = sls_fit(sample)
        r2 = sls_fit(shuffled)
        assert r2.theta.kappa_c == pytest.approx(r1.theta.kappa_c, abs=1e-6)
        assert r2.theta.kappa_m == pytest.approx(r1.theta.kappa_m, abs=1e-6)
        np.testing.assert_allclose(r2.gamma.gamma, r1.gamma.gamma, atol=1e-5)

    def test_determinism(self):
        sample = gaussian_sample(n=400, seed=5)
        r1 = sls_fit(sample)
        r2 = sls_fit(sample)
        assert r1.theta == r2.theta
        np.testing.assert_array_equal(r1.gamma.gamma, r2.gamma.gamma)


class TestOnGaussianData:
    def test_sls_near_truth(self):
        report = sls_fit(gaussian_sample(n=1500, seed=6))
        assert report.theta.alpha_cc == pytest.approx(0.5, abs=0.15)
        assert report.theta.alpha_mm == pytest.approx(0.2, abs=0.12)
        assert report.theta.beta_c == pytest.approx(1.7, abs=0.2)

    def test_sgls_identity_weights_match_sls(self):
        sample = gaussian_sample(n=500, seed=7)
        sls = sls_fit(sample)
        from otmatch.estimators import SigmaHat

        basis = BernsteinTensor(0, 0, sls.gamma.lo, sls.gamma.hi)
        coefs = np.array([[1.0], [0.0], [0.0], [1.0], [0.0], [1.0]])
        identity = SigmaHat(basis=basis, coefs=coefs, scale=1.0)
        sgls = sgls_fit(sample, sigma=identity)
        assert sgls.theta.kappa_c == pytest.approx(sls.theta.kappa_c, rel=1e-3)
        assert sgls.theta.kappa_m == pytest.approx(sls.theta.kappa_m, rel=1e-3)

    def test_sml_close_to_sls_under_iid(self):
        sample = gaussian_sample(n=1200, seed=8)
        sml = sml_fit(sample)
        sls = sls_fit(sample)
        assert sml.theta.alpha_cc == pytest.approx(sls.theta.alpha_cc, abs=0.1)
        assert "loglik" in sml.metadata


class TestSigmaHat:
    def test_recovers_constant_covariance(self):
        sample = gaussian_sample(n=2000, seed=9)
        report = sls_fit(sample)
        sigma = estimate_sigma0(sample, report, degrees=(2, 2))
        S = sigma(np.zeros((1, 2)))[0]
        np.testing.assert_allclose(np.diag(S), [4.0, 1.0, 1.0], rtol=0.35)
        assert abs(S[0, 1]) < 0.5

    def test_positive_definite_everywhere(self):
        sample = gaussian_sample(n=600, seed=10)
        report = sls_fit(sample)
        sigma = estimate_sigma0(sample, report)
        grid = np.random.default_rng(0).uniform(-2.5, 2.5, size=(200, 2))
        lo, hi = report.gamma.lo, report.gamma.hi
        grid = np.clip(grid, lo, hi)
        eigs = np.linalg.eigvalsh(sigma(grid))
        assert eigs.min() > 0


class TestVariance:
    def test_delta_method_and_coverage_shape(self):
        sample = gaussian_sample(n=1200, seed=11)
        report = sls_fit(sample)
        sigma = estimate_sigma0(sample, report, degrees=(2, 2))
        out = variance_theta(report, sample, sigma)
        assert out.vcov is not None
        se_kc = np.sqrt(out.vcov[0, 0])
        assert out.se_alpha_cc == pytest.approx(se_kc / report.theta.kappa_c**2)
        # sandwich SEs should be near the benchmark MC spread at this n
        assert 0.01 < out.se_alpha_cc < 0.2
        assert 0.01 < out.se_alpha_mm < 0.2


class TestReportSerialization:
    def test_json_roundtrip(self, tmp_path):
        sample, _, _ = in_span_sample(n=300, seed=12, noise=0.1)
        report = sls_fit(sample)
        path = tmp_path / "report.json"
        report.to_json(path)
        back = report_from_json(path)
        assert back.theta == report.theta
        np.testing.assert_array_equal(back.gamma.gamma, report.gamma.gamma)
        assert back.method == "sls"
        assert back.objective == report.objective

    def test_malformed_report(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"method": "sls"}))
        with pytest.raises(DataError):
            report_from_json(path)


class TestBic:
    def test_prefers_true_degree_over_underfit(self):
        sample, _, _ = in_span_sample(n=500, seed=13, noise=0.05)
        good = sls_fit(sample, degrees=(4, 4))
        poor = sls_fit(sample, degrees=(1, 1))
        assert bic_score(good, sample) < bic_score(poor, sample)
