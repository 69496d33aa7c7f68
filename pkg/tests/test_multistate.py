import numpy as np
import pytest
from hypothesis import given, settings
from strategies import multistate_data, survival_data

from cpsurv.errors import InputError
from cpsurv.event_data import build_panel
from cpsurv.multistate import aalen_johansen, aj_covariance, aj_endpoint, cumulative_intensity_matrix
from cpsurv.univariate import kaplan_meier


def test_d3_increments_and_row(d3):
    inten = cumulative_intensity_matrix(d3)
    np.testing.assert_allclose(inten.increments[0][0], [-1 / 3, 1 / 3, 0], atol=1e-15)
    np.testing.assert_allclose(inten.increments[1][0], [-1 / 2, 0, 1 / 2], atol=1e-15)
    P = aalen_johansen(inten, 0.0, 2.0)
    np.testing.assert_allclose(P(2.0)[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-10)
    np.testing.assert_array_equal(P(2.0)[1:], np.eye(3)[1:])


def test_empty_window_is_identity(d3):
    P = aalen_johansen(cumulative_intensity_matrix(d3), 0.0, 0.5)
    np.testing.assert_array_equal(P(0.5), np.eye(3))


def test_s_after_t_rejected(d3):
    with pytest.raises(InputError):
        aalen_johansen(cumulative_intensity_matrix(d3), 2.0, 1.0)


def test_two_state_reduces_to_kaplan_meier(d1):
    km = kaplan_meier(d1)
    P = aalen_johansen(cumulative_intensity_matrix(d1), covariance=True)
    np.testing.assert_array_equal(P.matrices[:, 0, 0], km.estimate.values)
    np.testing.assert_allclose(P.variance("alive", "alive").values, km.variance.values, atol=1e-10)


def _finite_difference_covariance(inten, s, t):
    """Delta-method covariance by numerically differentiating the product in each factor."""
    k = inten.k
    lo = np.searchsorted(inten.times, s, side="right")
    hi = np.searchsorted(inten.times, t, side="right")
    F = [np.eye(k) + inten.increments[u] for u in range(lo, hi)]

    def product(mats):
        P = np.eye(k)
        for m in mats:
            P = P @ m
        return P

    cov = np.zeros((k * k, k * k))
    for idx, u in enumerate(range(lo, hi)):
        Y = inten.at_risk[u]
        for h in range(k):
            if Y[h] == 0:
                continue
            p = F[idx][h]
            sig = (np.diag(p) - np.outer(p, p)) / Y[h]
            J = np.zeros((k * k, k))
            for j in range(k):
                eps = 1e-6
                up = [m.copy() for m in F]
                dn = [m.copy() for m in F]
                up[idx][h, j] += eps
                dn[idx][h, j] -= eps
                J[:, j] = (product(up) - product(dn)).reshape(-1) / (2 * eps)
            cov += J @ sig @ J.T
    return cov


@settings(max_examples=30, deadline=None)
@given(multistate_data())
def test_covariance_routes_agree(records):
    if all(r.censored for r in records):
        return
    panel = build_panel(records, state_space=("1", "2", "3"))
    inten = cumulative_intensity_matrix(panel)
    t = float(inten.times[-1])
    path = aalen_johansen(inten, 0.0, t, covariance=True)
    direct = aj_covariance(inten, panel, 0.0, t)
    np.testing.assert_allclose(path.covariance[-1], direct, atol=1e-12)
    np.testing.assert_allclose(direct, _finite_difference_covariance(inten, 0.0, t), atol=1e-7)
    P, C = aj_endpoint(inten, 0.0, t)
    np.testing.assert_allclose(P, path(t), atol=1e-12)
    np.testing.assert_array_equal(C, direct)


@settings(max_examples=40, deadline=None)
@given(multistate_data())
def test_stochastic_and_chapman_kolmogorov(records):
    if all(r.censored for r in records):
        return
    inten = cumulative_intensity_matrix(build_panel(records, state_space=("1", "2", "3")))
    t = float(inten.times[-1])
    P = aalen_johansen(inten, 0.0, t)
    assert np.all(P.matrices >= -1e-15)
    np.testing.assert_allclose(P.matrices.sum(axis=2), 1.0, atol=1e-12)
    u = float(inten.times[len(inten.times) // 2])
    left = aalen_johansen(inten, 0.0, u)(u)
    right = aalen_johansen(inten, u, t)(t)
    np.testing.assert_allclose(left @ right, P(t), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(survival_data(entry=True))
def test_survival_reduction_property(records):
    if all(r.censored for r in records):
        return
    panel = build_panel(records)
    km = kaplan_meier(panel)
    P = aalen_johansen(cumulative_intensity_matrix(panel), covariance=True)
    np.testing.assert_array_equal(P.matrices[:, 0, 0], km.estimate.values)
    np.testing.assert_allclose(P.covariance[:, 0, 0], km.variance.values, atol=1e-10)


def test_intensity_hazard_accessor(d3):
    inten = cumulative_intensity_matrix(d3)
    assert inten.hazard("1", "3")(2.0) == 0.5
    np.testing.assert_allclose(inten.cumulative().sum(axis=2), 0.0, atol=1e-15)
