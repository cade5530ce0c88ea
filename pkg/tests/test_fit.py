"""Tests for the concave fit, PWL surrogates and the gap certificate."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnum.errors import ConfigError, DomainError
from sdnum.fit import (
    PwlUtility,
    epsilon_proxy,
    evaluate_pwl,
    fit_concave_monotone,
    gap_bound,
    kkt_residual,
    project_nonnegative,
)
from sdnum.market import QuadraticOracle, solve_aggregate


class TestScalarFit:
    def test_non_concave_samples(self):
        model = fit_concave_monotone([(0, 0.0), (1, 0.0), (2, 2.0)])
        np.testing.assert_allclose(model.values, [-1 / 3, 2 / 3, 5 / 3], atol=1e-9)
        np.testing.assert_allclose(model.gradients[:, 0], [1.0, 1.0, 1.0], atol=1e-9)
        assert model.objective == pytest.approx(2 / 3)
        assert model.kkt_residual <= 1e-6

    def test_concave_samples_are_kept(self):
        samples = [(0, 0.0), (1, 2.0), (2, 3.0), (3, 3.5)]
        model = fit_concave_monotone(samples)
        np.testing.assert_allclose(model.values, [0.0, 2.0, 3.0, 3.5], atol=1e-9)
        assert model.objective == pytest.approx(0.0, abs=1e-12)

    def test_decreasing_samples_flatten(self):
        model = fit_concave_monotone([(0, 3.0), (1, 2.0), (2, 1.0)])
        np.testing.assert_allclose(model.values, [2.0, 2.0, 2.0], atol=1e-9)
        np.testing.assert_allclose(model.gradients, 0.0, atol=1e-9)

    def test_anchors_come_back_sorted(self):
        model = fit_concave_monotone([(2, 3.0), (0, 0.0), (1, 2.0)])
        assert model.anchors[:, 0].tolist() == [0.0, 1.0, 2.0]
        assert model.raw.tolist() == [0.0, 2.0, 3.0]

    def test_single_sample(self):
        model = fit_concave_monotone([(4, -2.0)])
        assert model.values.tolist() == [-2.0]
        assert model.max_slope() == 0.0

    @pytest.mark.parametrize(
        "samples",
        [[], [(0, 1.0), (0, 2.0)], [((0, 0, 0, 0), 1.0)], [(0, float("nan"))]],
    )
    def test_rejects_bad_samples(self, samples):
        with pytest.raises(ConfigError):
            fit_concave_monotone(samples)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=8),
    )
    def test_fit_is_concave_and_non_decreasing(self, values):
        samples = [(float(i), v) for i, v in enumerate(values)]
        model = fit_concave_monotone(samples)
        slopes = np.diff(model.values)
        assert np.all(slopes >= -1e-9)
        assert np.all(np.diff(slopes) <= 1e-9)
        assert model.consistency_gap() <= 1e-8 * (1 + np.abs(model.values).max())
        # a constant at the sample mean is feasible, so the fit cannot do worse
        u = np.asarray(values)
        assert model.objective <= float(np.sum((u - u.mean()) ** 2)) + 1e-9


class TestVectorFit:
    def test_samples_of_a_concave_function(self):
        points = [(a, b) for a in (0.0, 1.0) for b in (0.0, 2.0)]
        samples = [((a, b), math.sqrt(1 + a) + math.sqrt(1 + b)) for a, b in points]
        model = fit_concave_monotone(samples, kkt_tol=1e-4)
        np.testing.assert_allclose(model.values, [u for _, u in samples], atol=1e-3)
        assert np.all(model.gradients >= 0)
        assert model.dim == 2


class TestPwlUtility:
    def test_evaluates_lower_envelope(self):
        model = PwlUtility(anchors=[0.0, 4.0], values=[0.0, 12.0], gradients=[3.0, 1.0])
        assert evaluate_pwl(model, 2.0) == 6.0
        assert evaluate_pwl(model, 6.0) == 14.0
        np.testing.assert_allclose(evaluate_pwl(model, np.array([[0.0], [4.0]])), [0.0, 12.0])

    def test_rejects_inconsistent_planes(self):
        with pytest.raises(ConfigError):
            PwlUtility(anchors=[0.0, 1.0], values=[0.0, 5.0], gradients=[1.0, 1.0])

    def test_rejects_negative_gradient(self):
        with pytest.raises(ConfigError):
            PwlUtility(anchors=[0.0], values=[0.0], gradients=[-1.0])

    def test_text_format_is_exact(self, tmp_path):
        model = fit_concave_monotone([(0, 0.1), (1, 0.7), (2, 2.0 / 3.0)])
        path = tmp_path / "loc1.pwl"
        model.to_text(path)
        again = PwlUtility.from_text(path)
        assert np.array_equal(again.values, model.values)
        assert np.array_equal(again.gradients, model.gradients)
        assert again.objective == model.objective

    def test_dict_keeps_unknown_raw(self):
        model = PwlUtility.constant(1.5)
        data = model.to_dict()
        assert data["raw"] == [None]
        assert PwlUtility.from_dict(data).values.tolist() == [1.5]

    def test_malformed_dict(self):
        with pytest.raises(ConfigError):
            PwlUtility.from_dict({"anchors": [0.0]})

    def test_kkt_residual_flags_bad_fit(self):
        anchors = np.array([[0.0], [1.0], [2.0]])
        raw = np.array([0.0, 0.0, 2.0])
        good = kkt_residual(anchors, raw, np.array([-1 / 3, 2 / 3, 5 / 3]), np.ones((3, 1)))
        bad = kkt_residual(anchors, raw, np.array([0.0, 0.0, 0.0]), np.zeros((3, 1)))
        assert good["max"] <= 1e-9
        assert bad["max"] > 0.1


class TestGapCertificate:
    def test_bound(self):
        cert = gap_bound(0.5, 2.0)
        assert cert.bound == pytest.approx(1.0)
        assert cert.recompute() == pytest.approx(cert.bound)
        assert not cert.proxy

    @pytest.mark.parametrize("epsilon,m_f", [(0.1, 0.0), (0.1, -1.0), (-0.1, 1.0)])
    def test_domain(self, epsilon, m_f):
        with pytest.raises(DomainError):
            gap_bound(epsilon, m_f)

    def test_epsilon_proxy_adds_residual_and_stderr(self):
        model = fit_concave_monotone([(0, 0.0), (1, 0.0), (2, 2.0)])
        assert epsilon_proxy([model]) == pytest.approx(2 / 3)
        assert epsilon_proxy([model, model], [0.1, 0.2]) == pytest.approx(4 / 3 + 0.3)
        with pytest.raises(DomainError):
            epsilon_proxy([model], [0.1, 0.2])

    def test_surrogate_optimum_within_bound(self):
        true = [QuadraticOracle([2.0], [[1.0]]), QuadraticOracle([3.0], [[2.0]])]
        surrogate = [QuadraticOracle([2.1], [[1.0]]), QuadraticOracle([3.0], [[2.0]])]
        y_true = solve_aggregate(true, [1.0])
        y_hat = solve_aggregate(surrogate, [1.0])
        np.testing.assert_allclose(y_true[:, 0], [1 / 3, 2 / 3], atol=1e-6)
        np.testing.assert_allclose(y_hat[:, 0], [11 / 30, 19 / 30], atol=1e-6)
        # the surrogates differ by 0.1 * y_1 <= 0.1 on the budget set; m_f = min(1, 2)
        cert = gap_bound(0.1 * 1.0, 1.0)
        assert np.linalg.norm(y_hat - y_true) <= cert.bound


def test_project_nonnegative():
    assert project_nonnegative([-1.0, 0.5]).tolist() == [0.0, 0.5]
