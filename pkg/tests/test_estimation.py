import numpy as np
import pytest

from iboss.data import DataMatrix
from iboss.errors import (
    DimensionMismatch,
    InvalidLevel,
    RankDeficientSubdata,
    TooFewRows,
)
from iboss.estimation import (
    adjusted_intercept,
    confidence_interval,
    fit_full,
    ols_fit,
    predict_mean,
)
from iboss.selection import SelectionSpec, Subdata, iboss_dopt, take_rows


def brute_ols(x, y):
    """Normal-equations oracle via explicit inverse."""
    xtx_inv = np.linalg.inv(x.T @ x)
    return xtx_inv @ (x.T @ y)


def make_subdata(z, y, tag="dopt"):
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    return Subdata(indices=np.arange(len(y), dtype=np.int64), z=z,
                   y=np.asarray(y, dtype=float), method_tag=tag)


class TestOlsFit:
    def test_exact_line(self):
        sub = make_subdata([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0])
        fit = ols_fit(sub)
        assert abs(fit.beta0 - 1.0) < 1e-12
        np.testing.assert_allclose(fit.beta1, [2.0], atol=1e-12)
        assert fit.sigma2_hat < 1e-24
        assert fit.dof == 2

    def test_hand_solved_two_parameter(self):
        sub = make_subdata([0.0, 1.0, 2.0], [0.0, 1.0, 1.0])
        fit = ols_fit(sub)
        assert abs(fit.beta0 - 1.0 / 6.0) < 1e-12
        np.testing.assert_allclose(fit.beta1, [0.5], atol=1e-12)
        assert abs(fit.sigma2_hat - 1.0 / 6.0) < 1e-12  # rss=1/6, dof=1

    def test_duplicated_covariate_column(self):
        z = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        with pytest.raises(RankDeficientSubdata):
            ols_fit(make_subdata(z, [1.0, 2.0, 3.0, 4.0]))

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            ols_fit(make_subdata([1.0, 2.0], [1.0, 2.0]))

    def test_covariance_structure(self, rng):
        z = rng.standard_normal((40, 3))
        y = rng.standard_normal(40)
        fit = ols_fit(make_subdata(z, y))
        np.testing.assert_allclose(fit.se, np.sqrt(np.diagonal(fit.cov)))
        assert np.min(np.linalg.eigvalsh(0.5 * (fit.cov + fit.cov.T))) > -1e-9
        x = np.column_stack([np.ones(40), z])
        np.testing.assert_allclose(fit.beta, brute_ols(x, y), rtol=1e-8)

    def test_matches_full_fit(self, rng):
        z = rng.standard_normal((60, 2))
        y = z @ [1.0, -2.0] + rng.standard_normal(60)
        data = DataMatrix(z=z, y=y)
        sub = take_rows(data, np.arange(60), "dopt")
        np.testing.assert_allclose(ols_fit(sub).beta, fit_full(data).beta,
                                   rtol=1e-9, atol=1e-12)


class TestAdjustedIntercept:
    def test_hand_value(self):
        assert adjusted_intercept([2.0], 5.0, [2.0]) == 1.0

    def test_zero_slopes(self):
        assert adjusted_intercept([0.0, 0.0], 3.5, [9.0, -4.0]) == 3.5

    def test_cancellation(self):
        assert adjusted_intercept([1.0, 1.0], 0.0, [1.0, -1.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            adjusted_intercept([1.0, 2.0], 0.0, [1.0])


class TestConfidenceInterval:
    def test_standard_normal_quantile_width(self):
        ci = confidence_interval(0.0, 1.0, 0.95)
        assert abs(ci.lower + 1.959964) < 5e-7
        assert abs(ci.upper - 1.959964) < 5e-7

    def test_degenerate_se(self):
        ci = confidence_interval(3.0, 0.0, 0.95)
        assert ci.lower == ci.upper == 3.0

    def test_half_level(self):
        ci = confidence_interval(1.0, 2.0, 0.5)
        assert abs(ci.upper - (1.0 + 2.0 * 0.674490)) < 2e-6

    def test_invalid_level(self):
        for level in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(InvalidLevel):
                confidence_interval(0.0, 1.0, level)

    def test_negative_se(self):
        with pytest.raises(ValueError):
            confidence_interval(0.0, -1.0, 0.95)


class TestPredictMean:
    def _fit(self):
        return ols_fit(make_subdata([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0]))

    def test_at_zero(self):
        np.testing.assert_allclose(predict_mean(self._fit(), [[0.0]]), [1.0])

    def test_at_three(self):
        np.testing.assert_allclose(predict_mean(self._fit(), [[3.0]]), [7.0])

    def test_adjusted_intercept_path(self):
        z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
        y = z @ [1.0, 1.0]
        fit = ols_fit(make_subdata(z, y))
        got = predict_mean(fit, [[2.0, 3.0]], use_adjusted_intercept=True,
                           beta0_adj=0.0)
        np.testing.assert_allclose(got, [5.0], atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_mean(self._fit(), [[1.0, 2.0]])

    def test_missing_adjusted_value(self):
        with pytest.raises(ValueError):
            predict_mean(self._fit(), [[1.0]], use_adjusted_intercept=True)


class TestCalibration:
    """Conditional-on-Z Monte Carlo properties of the subdata fit."""

    def setup_method(self):
        rng = np.random.default_rng(7)
        n, p, k = 2000, 3, 80
        z = rng.standard_normal((n, p))
        data = DataMatrix(z=z, y=rng.standard_normal(n))
        self.sub = iboss_dopt(data, SelectionSpec(k=k))
        self.beta = np.array([1.0, 2.0, -1.0, 0.5])
        self.sigma = 3.0
        self.rng = rng

    def _replicate(self, reps):
        x = self.sub.design()
        mean = x @ self.beta
        betas, sigma2s, covs = [], [], []
        for _ in range(reps):
            y = mean + self.sigma * self.rng.standard_normal(len(mean))
            fit = ols_fit(Subdata(indices=self.sub.indices, z=self.sub.z, y=y,
                                  method_tag="dopt"))
            betas.append(fit.beta)
            sigma2s.append(fit.sigma2_hat)
            covs.append(fit.cov)
        return np.array(betas), np.array(sigma2s), np.array(covs)

    def test_unbiased_and_sigma2_and_cov(self):
        reps = 2000
        betas, sigma2s, covs = self._replicate(reps)
        mc_se = betas.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(betas.mean(axis=0) - self.beta) < 3.0 * mc_se)
        assert abs(sigma2s.mean() - self.sigma ** 2) < 0.05 * self.sigma ** 2
        emp_cov = np.cov(betas.T, ddof=1)
        mean_cov = covs.mean(axis=0)
        rel = np.linalg.norm(emp_cov - mean_cov) / np.linalg.norm(mean_cov)
        assert rel < 0.15

    def test_intercept_variance_floor(self):
        # with the true sigma2 plugged in, V(beta0) >= sigma2/k on every fit
        x = self.sub.design()
        cov = self.sigma ** 2 * np.linalg.inv(x.T @ x)
        assert cov[0, 0] >= self.sigma ** 2 / self.sub.k_eff - 1e-12
