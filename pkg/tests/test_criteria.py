import math

import numpy as np
import pytest

from iboss import baselines, criteria, simgen
from iboss.data import DataMatrix
from iboss.errors import DegenerateColumn, SingularExpectedInfo
from iboss.selection import (
    SelectionSpec,
    Subdata,
    full_column_ranges,
    iboss_dopt,
    quantile_column_ranges,
)


def make_subdata(z, y=None):
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    if y is None:
        y = np.zeros(z.shape[0])
    return Subdata(indices=np.arange(z.shape[0], dtype=np.int64), z=z,
                   y=np.asarray(y, dtype=float), method_tag="dopt")


def dopt_run(case_tag, p, n, k, seed):
    rng = simgen.substream(seed, 0)
    case = simgen.CovariateCase(tag=case_tag, p=p)
    data = simgen.gen_dataset(case, n, np.ones(p + 1), 9.0, "homoscedastic", rng)
    sub = iboss_dopt(data, SelectionSpec(k=k))
    return data, sub


class TestInfoMatrix:
    def test_two_point_example(self):
        info = criteria.info_matrix(make_subdata([0.0, 1.0]), 1.0)
        np.testing.assert_allclose(info.m, [[2.0, 1.0], [1.0, 1.0]])

    def test_single_point_rank_one(self):
        info = criteria.info_matrix(make_subdata([2.0]), 1.0)
        assert np.linalg.matrix_rank(info.m) == 1

    def test_sigma_scale_law(self):
        sub = make_subdata([0.0, 1.0, 2.0])
        base = criteria.info_matrix(sub, 1.0).m
        scaled = criteria.info_matrix(sub, 4.0).m
        np.testing.assert_allclose(scaled, base / 4.0)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            criteria.info_matrix(make_subdata([0.0, 1.0]), 0.0)


class TestDUpperBound:
    def test_unit_case_attained(self):
        # p=1, k=2, sigma2=1, range 1: the bound is exactly log(1)=0 and the
        # corner subdata {0,1} attains it (det [[2,1],[1,1]] = 1)
        bound = criteria.d_upper_bound([[0.0, 1.0]], k=2, p=1, sigma2=1.0)
        assert abs(bound) < 1e-12
        realized = criteria.log_det_info(
            criteria.info_matrix(make_subdata([0.0, 1.0]), 1.0))
        assert abs(realized - bound) < 1e-9

    def test_zero_range(self):
        assert criteria.d_upper_bound([[2.0, 2.0]], k=2, p=1, sigma2=1.0) == \
            float("-inf")

    def test_doubling_range_adds_log4(self):
        one = criteria.d_upper_bound([[0.0, 1.0]], k=4, p=1, sigma2=1.0)
        two = criteria.d_upper_bound([[0.0, 2.0]], k=4, p=1, sigma2=1.0)
        assert abs(two - one - math.log(4.0)) < 1e-12

    def test_corner_equality_multidim(self):
        # 2^p corner points each once: equality case of the ceiling
        p, corners = 2, np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        sub = make_subdata(corners)
        bound = criteria.d_upper_bound([[0.0, 1.0]] * p, k=4, p=p, sigma2=1.0)
        realized = criteria.log_det_info(criteria.info_matrix(sub, 1.0))
        assert abs(realized - bound) < 1e-9

    def test_ceiling_holds_for_selected_subdata(self):
        for tag in ("normal", "lognormal", "t2", "mixture", "t1"):
            data, sub = dopt_run(tag, 4, 3000, 48, seed=99)
            rep = criteria.det_ceiling_report(sub, 9.0, full_column_ranges(data))
            assert rep.satisfied, tag

    def test_ceiling_holds_interactions_case(self):
        data, sub = dopt_run("interactions", 50, 4000, 100, seed=5)
        rep = criteria.det_ceiling_report(sub, 9.0, full_column_ranges(data))
        assert rep.satisfied


class TestAttainmentRatio:
    def test_single_column_min_max_equality(self):
        sub = make_subdata([0.0, 1.0])
        rep = criteria.attainment_ratio_report(sub, [[0.0, 1.0]], [[0.0, 1.0]], r=1)
        assert rep.satisfied
        assert abs(rep.lhs) < 1e-12  # ratio is exactly 1
        assert abs(rep.rhs) < 1e-12  # R is 1x1 identity, ranges cancel

    def test_plugin_rhs_value(self):
        # orthogonal +-1 columns: R = I, so rhs reduces to log(1/p^p)
        z = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        sub = make_subdata(z)
        ranges = [[-1.0, 1.0], [-1.0, 1.0]]
        rep = criteria.attainment_ratio_report(sub, ranges, ranges, r=1)
        assert abs(rep.rhs - math.log(1.0 / 4.0)) < 1e-12
        assert rep.satisfied

    def test_holds_on_selected_runs(self):
        for seed in range(10):
            data, sub = dopt_run("normal", 5, 2000, 100, seed)
            rep = criteria.attainment_ratio_report(
                sub, full_column_ranges(data), quantile_column_ranges(data, 10), 10)
            assert rep.satisfied

    def test_degenerate_column(self):
        z = np.column_stack([np.full(4, 2.0), np.arange(4.0)])
        sub = make_subdata(z)
        with pytest.raises(DegenerateColumn):
            criteria.attainment_ratio_report(sub, [[2.0, 2.0], [0.0, 3.0]],
                                    [[2.0, 2.0], [0.0, 3.0]], r=1)


class TestVarianceBounds:
    def test_symmetric_equality_case(self):
        a = 2.0
        z = np.array([[-a], [a], [-a], [a]])
        sub = make_subdata(z)
        reports = criteria.variance_bound_reports(sub, 9.0, [[-a, a]], [[-a, a]], r=2)
        intercept = reports[0]
        assert intercept.name == "intercept-variance-floor"
        assert abs(intercept.lhs - 9.0 / 4.0) < 1e-12  # V(beta0) = sigma2/k exactly
        assert intercept.satisfied
        assert all(r.satisfied for r in reports)

    def test_cap_grows_as_quantile_range_shrinks(self):
        a = 2.0
        z = np.array([[-a], [a], [-a], [a]])
        sub = make_subdata(z)
        wide = criteria.variance_bound_reports(sub, 9.0, [[-a, a]], [[-a, a]], 2)[2]
        narrow = criteria.variance_bound_reports(sub, 9.0, [[-a, a]], [[-0.01, 0.01]], 2)[2]
        assert narrow.lhs > wide.lhs
        assert narrow.satisfied

    def test_holds_on_selected_runs(self):
        for seed in range(10):
            data, sub = dopt_run("normal", 5, 2000, 100, seed)
            reports = criteria.variance_bound_reports(
                sub, 9.0, full_column_ranges(data),
                quantile_column_ranges(data, 10), 10)
            assert len(reports) == 2 * 5 + 1
            assert all(r.satisfied for r in reports)


class TestSubsamplingLowerBound:
    def test_uni_closed_form(self, rng):
        z = rng.standard_normal((40, 2))
        data = DataMatrix(z=z, y=rng.standard_normal(40))
        plan = baselines.make_plan(data, "uni")
        got = criteria.subsampling_lower_bound(data, plan, k=8,
                                               p_nonsingular=1.0, sigma2=4.0)
        x = data.design()
        expected = (4.0 / 8) * np.linalg.inv(x.T @ x / 40)
        np.testing.assert_allclose(got, expected, rtol=1e-9)

    def test_doubling_k_halves(self, rng):
        z = rng.standard_normal((30, 2))
        data = DataMatrix(z=z, y=rng.standard_normal(30))
        plan = baselines.make_plan(data, "uni")
        a = criteria.subsampling_lower_bound(data, plan, 10, 1.0, 1.0)
        b = criteria.subsampling_lower_bound(data, plan, 20, 1.0, 1.0)
        np.testing.assert_allclose(a, 2.0 * b, rtol=1e-12)

    def test_lev_matches_published_form(self, rng):
        # pi = h/(p+1) turns the general bound into
        # (p+1) sigma2 P / k * (sum x x^T (X^T X)^{-1} x x^T)^{-1}
        n, p = 50, 2
        z = rng.standard_normal((n, p))
        data = DataMatrix(z=z, y=rng.standard_normal(n))
        plan = baselines.make_plan(data, "lev")
        got = criteria.subsampling_lower_bound(data, plan, k=10,
                                               p_nonsingular=0.9, sigma2=2.0)
        x = data.design()
        inner = np.zeros((p + 1, p + 1))
        xtx_inv = np.linalg.inv(x.T @ x)
        for i in range(n):
            xi = x[i]
            inner += np.outer(xi, xi) * (xi @ xtx_inv @ xi)
        expected = (p + 1) * 2.0 * 0.9 / 10 * np.linalg.inv(inner)
        np.testing.assert_allclose(got, expected, rtol=1e-8)

    def test_singular_expected_info(self):
        z = np.ones((5, 1))
        with pytest.raises(SingularExpectedInfo):
            data = DataMatrix(z=z, y=np.arange(5.0))
            plan = baselines.SamplingPlan(pi=np.full(5, 0.2), weights=np.ones(5),
                                          with_replacement=True, method_tag="uni")
            criteria.subsampling_lower_bound(data, plan, 2, 1.0, 1.0)

    def test_loewner_vs_small_monte_carlo(self, rng):
        n, p, k = 120, 2, 15
        z = rng.standard_normal((n, p))
        beta = np.ones(p + 1)
        mean = np.column_stack([np.ones(n), z]) @ beta
        data0 = DataMatrix(z=z, y=mean)
        plan = baselines.make_plan(data0, "uni")
        estimates, failures = [], 0
        while len(estimates) < 3000:
            y = mean + rng.standard_normal(n)
            shot = DataMatrix(z=z, y=y)
            counts = baselines.draw(plan, k, rng)
            try:
                estimates.append(baselines.weighted_ls(shot, counts, plan))
            except Exception:
                failures += 1
        est = np.array(estimates)
        emp_cov = np.cov(est.T, ddof=1)
        p_ns = len(estimates) / (len(estimates) + failures)
        bound = criteria.subsampling_lower_bound(data0, plan, k, p_ns, 1.0)
        rep = criteria.loewner_report("uni-floor", emp_cov, bound,
                                      tol=1e-3 * float(np.trace(emp_cov)))
        assert rep.satisfied
