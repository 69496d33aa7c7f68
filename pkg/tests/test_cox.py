import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar
from strategies import survival_data

from cpsurv.cox import (
    accumulated_information,
    breslow_baseline,
    fit,
    martingale_residuals,
    partial_loglik,
    risk_set_data,
    score_process,
)
from cpsurv.errors import MonotoneLikelihood
from cpsurv.event_data import CENSORED, EventRecord, build_panel, survival_records, validate_records
from cpsurv.univariate import nelson_aalen

BETA_D4 = math.log((-1 + math.sqrt(17)) / 8)


def naive_loglik(records, beta):
    """Breslow partial log-likelihood by explicit loops over events and risk sets."""
    beta = np.atleast_1d(beta)
    total = 0.0
    for r in records:
        if r.censored:
            continue
        risk = [math.exp(float(np.dot(beta, q.covariates))) for q in records if q.entry < r.exit <= q.exit]
        total += float(np.dot(beta, r.covariates)) - math.log(sum(risk))
    return total


def test_d4_loglik_at_zero(d4):
    assert abs(partial_loglik(d4, [0.0])[0] - (-math.log(4) - math.log(3) - math.log(2))) < 1e-12


def test_d4_estimate(d4):
    res = fit(d4)
    assert res.converged
    assert abs(res.beta[0] - BETA_D4) < 1e-10
    recs = d4.records()
    grid = minimize_scalar(lambda b: -naive_loglik(recs, b), bounds=(-3, 3), method="bounded",
                           options={"xatol": 1e-10})
    assert abs(res.beta[0] - grid.x) < 1e-6
    assert abs(score_process(res).final[0]) < 1e-9


def test_d4_baseline_and_residual(d4):
    res = fit(d4)
    dA = breslow_baseline(d4, res.beta).values[0]
    assert abs(dA - 1 / (2 + 2 * math.exp(BETA_D4))) < 1e-10
    resid = martingale_residuals(res)
    assert abs(resid.final[0] - (1 - dA)) < 1e-10
    assert abs(resid.final.sum()) < 1e-10


def test_breslow_at_zero_is_pooled_nelson_aalen(d4):
    base = breslow_baseline(d4, [0.0])
    na = nelson_aalen(build_panel(d4))
    np.testing.assert_allclose(base.values, na.estimate.values, rtol=0, atol=1e-15)


def _simulated(rng, n=60, p=2):
    z = rng.normal(size=(n, p))
    t = rng.exponential(1 / np.exp(z @ np.array([0.5, -0.3])[:p]))
    c = rng.exponential(2.0, size=n)
    return survival_records(np.round(np.minimum(t, c), 2) + 0.01, (t <= c).astype(int), covariates=z)


def test_gradient_and_information_match_finite_differences(rng):
    recs = _simulated(rng)
    data = risk_set_data(recs)
    for _ in range(5):
        beta = rng.normal(scale=0.5, size=2)
        _, score, info = partial_loglik(data, beta)
        h = 1e-5
        fd = np.array([(partial_loglik(data, beta + h * e)[0] - partial_loglik(data, beta - h * e)[0]) / (2 * h)
                       for e in np.eye(2)])
        assert np.max(np.abs(fd - score)) / np.max(np.abs(score)) <= 1e-6
        fd_info = -np.array([(partial_loglik(data, beta + h * e)[1] - partial_loglik(data, beta - h * e)[1]) / (2 * h)
                             for e in np.eye(2)])
        np.testing.assert_allclose(fd_info, info, rtol=1e-6, atol=1e-8)


def test_loglik_matches_loop_oracle(rng):
    recs = _simulated(rng, n=25)
    as_list = recs.records()
    for beta in ([0.0, 0.0], [0.3, -1.2], [2.0, 1.0]):
        assert abs(partial_loglik(recs, beta)[0] - naive_loglik(as_list, beta)) < 1e-10


def test_location_shift_invariance(rng):
    recs = _simulated(rng)
    c = 3.7
    shifted = recs.with_covariates(recs.covariates + np.array([c, 0.0]))
    a, b = fit(recs), fit(shifted)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-8)
    base_a, base_b = breslow_baseline(recs, a.beta), breslow_baseline(shifted, b.beta)
    np.testing.assert_allclose(base_b.values, base_a.values * math.exp(-c * a.beta[0]), rtol=1e-8)


def test_residuals_sum_to_zero_at_every_event_time(rng):
    res = fit(_simulated(rng))
    resid = martingale_residuals(res)
    for t in res.data.times:
        assert abs(resid.at(t).sum()) < 1e-10
    assert np.all(resid.final <= 1.0)


def test_score_process_structure(rng):
    res = fit(_simulated(rng))
    proc = score_process(res.data, [0.1, 0.2])
    _, score, info = partial_loglik(res.data, [0.1, 0.2])
    np.testing.assert_allclose(proc.final, score, atol=1e-12)
    np.testing.assert_array_equal(proc(res.data.times[0] / 2), [0.0, 0.0])
    np.testing.assert_allclose(accumulated_information(res.data, [0.1, 0.2]).values[-1], info, atol=1e-12)


def test_time_dependent_split_matches_unsplit(rng):
    recs = _simulated(rng, n=30)
    split = []
    for r in recs.records():
        mid = (r.entry + r.exit) / 2
        split.append(EventRecord(r.subject_id, r.entry, mid, r.from_state, CENSORED, r.covariates))
        split.append(EventRecord(r.subject_id, mid, r.exit, r.from_state, r.to_state, r.covariates))
    a = fit(recs)
    b = fit(validate_records(split))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-10)
    np.testing.assert_allclose(martingale_residuals(a).final, martingale_residuals(b).final, atol=1e-10)


def test_time_varying_covariate_taken_from_current_interval():
    # subject 0 switches covariate at 1.5; at its event time 2 the value in (1.5, 2] counts
    recs = validate_records([
        EventRecord(0, 0.0, 1.5, "alive", CENSORED, (0.0,)),
        EventRecord(0, 1.5, 2.0, "alive", "dead", (1.0,)),
        EventRecord(1, 0.0, 3.0, "alive", "dead", (0.0,)),
        EventRecord(2, 0.0, 1.0, "alive", "dead", (1.0,)),
        EventRecord(3, 0.0, 4.0, "alive", CENSORED, (1.0,)),
    ])
    flat = validate_records([
        EventRecord(0, 0.0, 2.0, "alive", "dead", (1.0,)),
        EventRecord(1, 0.0, 3.0, "alive", "dead", (0.0,)),
        EventRecord(2, 0.0, 1.0, "alive", "dead", (1.0,)),
        EventRecord(3, 0.0, 4.0, "alive", CENSORED, (1.0,)),
    ])
    # identical at event times 2 and 3; at time 1 only subject 0's covariate differs
    beta = [0.4]
    assert abs(naive_loglik(recs.records(), beta) - partial_loglik(recs, beta)[0]) < 1e-12
    assert partial_loglik(recs, beta)[0] != partial_loglik(flat, beta)[0]


def test_monotone_likelihood_detected():
    recs = survival_records([1, 2], [1, 0], covariates=[1, 0])
    with pytest.raises(MonotoneLikelihood) as info:
        fit(recs)
    assert info.value.fit is not None and info.value.fit.beta[0] > 5


def test_no_covariates_fit_is_trivial(d1_records):
    res = fit(d1_records)
    assert res.beta.size == 0 and res.converged


@settings(max_examples=30, deadline=None)
@given(survival_data(min_n=3, p=1, entry=True), st.floats(-1.5, 1.5))
def test_residual_identities_hold_at_any_beta(records, beta):
    if all(r.censored for r in records):
        return
    recs = validate_records(records)
    from cpsurv.cox import CoxFit
    data = risk_set_data(recs)
    ll, score, info = partial_loglik(data, [beta])
    frozen = CoxFit(beta=np.array([beta]), loglik=ll, score=score, information=info, iterations=0,
                    converged=False, data=data, loglik_null=ll)
    resid = martingale_residuals(frozen).final
    assert abs(resid.sum()) < 1e-10
    assert np.all(resid <= 1.0 + 1e-12)
    assert abs(ll - naive_loglik(records, beta)) < 1e-9
