import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import kstest

from cpsurv.errors import EmptyStudy, InvalidSpec
from cpsurv.martingale_lab import (
    CensoringSpec,
    HazardSpec,
    PiecewiseConstantHazard,
    clt_check,
    coverage_check,
    hazard_from_config,
    limit_variance,
    martingale_check,
    martingale_paths,
    run_study,
    simulate,
    simulate_batch,
)

STEP = PiecewiseConstantHazard((0.0, 0.5, 2.0), (2.0, 0.0, 0.75))


# ------------------------------------------------------------------ hazards


def test_cumulative_closed_form():
    np.testing.assert_allclose(STEP.cumulative([0.0, 0.25, 0.5, 1.0, 2.0, 4.0]), [0, 0.5, 1.0, 1.0, 1.0, 2.5])
    np.testing.assert_array_equal(STEP.hazard([0.0, 0.49, 0.5, 2.0, 9.0]), [2, 2, 0, 0.75, 0.75])


def test_inverse_skips_zero_pieces():
    assert STEP.inverse(1.0) == 0.5
    assert STEP.inverse(1.0 + 1e-12) == pytest.approx(2.0)
    assert math.isinf(PiecewiseConstantHazard((0.0, 1.0), (1.0, 0.0)).inverse(1.5))


@given(st.floats(0, 20))
def test_inverse_round_trip(a):
    t = STEP.inverse(a)
    assert STEP.cumulative(t) == pytest.approx(a, abs=1e-9)
    assert t == 0 or STEP.cumulative(t * (1 - 1e-9)) < a + 1e-9


def test_hazard_validation():
    with pytest.raises(InvalidSpec):
        PiecewiseConstantHazard((0.0, 1.0), (1.0, -1.0))
    with pytest.raises(InvalidSpec):
        PiecewiseConstantHazard((0.5,), (1.0,))
    with pytest.raises(InvalidSpec):
        HazardSpec.survival(0.0)                      # never leaves, no horizon
    HazardSpec.survival(0.0, horizon=3.0)
    with pytest.raises(InvalidSpec):
        CensoringSpec(scheme="type2", r=0)
    with pytest.raises(InvalidSpec):
        simulate(3, HazardSpec.survival(1.0), CensoringSpec(scheme="type2", r=4))


def test_sum_of_hazards():
    total = STEP + PiecewiseConstantHazard.constant(1.0)
    np.testing.assert_allclose(total.cumulative([1.0, 3.0]), STEP.cumulative([1.0, 3.0]) + [1.0, 3.0])


# --------------------------------------------------------------- simulation


def test_deterministic_and_independent_of_n():
    spec = HazardSpec.survival(STEP, beta=(0.3,))
    cens = CensoringSpec(scheme="random", rate=0.4)
    a = simulate(50, spec, cens, seed=5)
    b = simulate(50, spec, cens, seed=5)
    c = simulate(80, spec, cens, seed=5)
    np.testing.assert_array_equal(a.exit, b.exit)
    np.testing.assert_array_equal(a.exit, c.exit[:50])
    np.testing.assert_array_equal(a.covariates, c.covariates[:50])
    assert not np.array_equal(a.exit, simulate(50, spec, cens, seed=6).exit)


def test_batch_matches_single_streams():
    spec = HazardSpec({("1", "2"): STEP, ("2", "1"): PiecewiseConstantHazard.constant(0.5),
                       ("1", "3"): PiecewiseConstantHazard.constant(0.2)}, "1", horizon=6.0)
    batch = simulate_batch(20, spec, None, 3, [(0,), (1,), (2,)])
    for r, records in enumerate(batch):
        single = simulate(20, spec, None, 3, stream=(r,))
        np.testing.assert_array_equal(records.exit, single.exit)
        np.testing.assert_array_equal(records.to_code, single.to_code)


def test_type2_with_r_one():
    rec = simulate(40, HazardSpec.survival(1.0), CensoringSpec(scheme="type2", r=1), seed=2)
    assert rec.is_event.sum() == 1
    assert np.all(rec.exit == rec.exit[rec.is_event][0])


def test_type2_stops_at_rth_event():
    rec = simulate(40, HazardSpec.survival(1.0), CensoringSpec(scheme="type2", r=10), seed=2)
    assert rec.is_event.sum() == 10
    assert np.max(rec.exit) == np.max(rec.exit[rec.is_event])


def test_zero_hazard_with_horizon_censors_everyone():
    rec = simulate(25, HazardSpec.survival(0.0, horizon=3.0), seed=1)
    assert not rec.is_event.any() and np.all(rec.exit == 3.0)


def test_type1_censoring_bounds_follow_up():
    rec = simulate(200, HazardSpec.survival(0.5), CensoringSpec(scheme="type1", times=1.5), seed=1)
    assert np.all(rec.exit <= 1.5)
    assert np.all(rec.exit[~rec.is_event] == 1.5)


def test_exponential_mean():
    rec = simulate(100_000, HazardSpec.survival(1.0), seed=11)
    assert abs(rec.exit.mean() - 1.0) <= 3 / math.sqrt(100_000)


def test_inverse_transform_distribution():
    n = 100_000
    rec = simulate(n, HazardSpec.survival(STEP), seed=12)
    stat = kstest(rec.exit, lambda t: 1 - np.exp(-STEP.cumulative(t))).statistic
    assert stat <= 1.63 / math.sqrt(n)


def test_multistate_destinations_follow_intensity_ratio():
    spec = HazardSpec({("1", "2"): PiecewiseConstantHazard.constant(0.3),
                       ("1", "3"): PiecewiseConstantHazard.constant(0.9)}, "1")
    rec = simulate(40_000, spec, seed=3)
    share = np.mean(rec.to_code == spec.states.index("2"))
    assert abs(share - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 40_000)


def test_dependent_censoring_precedes_events():
    rec = simulate(1000, HazardSpec.survival(1.0), CensoringSpec(scheme="dependent", probability=1.0), seed=4)
    assert not rec.is_event.any()
    assert not CensoringSpec(scheme="dependent").independent


# ------------------------------------------------------- martingale pieces


def test_optional_variation_equals_counting_process_without_ties():
    spec = HazardSpec.survival(STEP)
    rec = simulate(300, spec, CensoringSpec(scheme="random", rate=0.3), seed=8)
    grid = np.linspace(0.1, 5, 30)
    N, comp, opt = martingale_paths(rec, spec, grid)
    np.testing.assert_array_equal(opt, N)


def test_compensator_matches_quadrature():
    spec = HazardSpec.survival(STEP, beta=(0.4,))
    rec = simulate(15, spec, CensoringSpec(scheme="random", rate=0.3), seed=9)
    t = 1.7
    _, comp, _ = martingale_paths(rec, spec, [t])
    total = 0.0
    for r in rec.records():
        hi = min(t, r.exit)
        if hi > r.entry:
            mult = math.exp(0.4 * r.covariates[0])
            total += mult * integrate.quad(lambda s: float(STEP.hazard(s)), r.entry, hi, points=[0.5, 2.0])[0]
    assert comp[0] == pytest.approx(total, rel=1e-10)


def test_limit_variance_closed_form():
    # no censoring, unit hazard: int_0^t e^s ds = e^t - 1
    assert limit_variance(HazardSpec.survival(1.0), None, 0.7) == pytest.approx(math.expm1(0.7), rel=1e-10)
    cens = CensoringSpec(scheme="random", rate=0.5)
    assert limit_variance(HazardSpec.survival(1.0), cens, 0.7) == pytest.approx(math.expm1(1.5 * 0.7) / 1.5, rel=1e-10)


@pytest.mark.slow
def test_independent_censoring_keeps_martingale_centered():
    spec = HazardSpec.survival(STEP)
    grid = [0.25, 0.5, 1.0, 2.0, 3.0]
    plain = martingale_check(spec, None, 60, grid, 2000, seed=1, sigma=3.5)
    censored = martingale_check(spec, CensoringSpec(scheme="random", rate=0.5), 60, grid, 2000, seed=1, sigma=3.5)
    mean_flags = lambda rep: [f for f in rep.flags if f["reason"] == "mean"]
    assert mean_flags(plain) == [] and mean_flags(censored) == []


def test_clt_degenerate_zero_hazard():
    rep = clt_check("nelson_aalen", HazardSpec.survival(0.0, horizon=2.0), None, [20], 5, [1.0])
    np.testing.assert_array_equal(rep.errors[20], 0.0)


def test_km_alias_matches_full_name():
    spec, cens = HazardSpec.survival(1.0), CensoringSpec(scheme="random", rate=0.5)
    short = clt_check("km", spec, cens, [30], 20, [0.5], seed=2)
    full = clt_check("kaplan_meier", spec, cens, [30], 20, [0.5], seed=2)
    np.testing.assert_array_equal(short.errors[30], full.errors[30])


def test_coverage_requires_replicates():
    with pytest.raises(EmptyStudy):
        coverage_check("nelson_aalen", HazardSpec.survival(0.5), None, 100, 1.0, 0)


@pytest.mark.slow
def test_coverage_at_half_level():
    rep = coverage_check("nelson_aalen", HazardSpec.survival(0.5), None, 400, 1.0, 3000, level=0.5, seed=2)
    assert abs(rep.coverage - 0.5) <= 4 * math.sqrt(0.25 / 3000)


# ------------------------------------------------------------------ configs


def test_config_parsing_and_study_report_is_reproducible():
    cfg = {
        "study": "coverage", "seed": 3, "replicates": 50, "estimator": "kaplan_meier", "n": 100,
        "time": 1.0, "hazard": {"levels": [0.5]},
        "censoring": {"scheme": "random", "distribution": "uniform", "low": 0.5, "high": 3.0},
    }
    a, b = run_study(cfg).to_dict(), run_study(cfg).to_dict()
    assert a == b and a["replicates"] == 50


def test_multistate_config():
    spec = hazard_from_config({"initial_state": "h", "transitions": [
        {"from": "h", "to": "s", "levels": [0.2]}, {"from": "s", "to": "d", "levels": [1.0, 2.0], "breakpoints": [0, 1]}]})
    assert spec.states == ("h", "s", "d") and spec.transient_states == ("h", "s")


def test_bad_configs():
    with pytest.raises(InvalidSpec):
        run_study({"study": "nope"})
    with pytest.raises(InvalidSpec):
        run_study({"study": "coverage", "hazard": {"levels": [1.0]}, "replicates": 5})
    with pytest.raises(InvalidSpec):
        hazard_from_config({"levels": [1.0, 2.0]})
