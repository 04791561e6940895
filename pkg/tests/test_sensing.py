import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from acoustic_mac.sensing import (
    FusionInput,
    PerformanceRequirement,
    SensingParams,
    cluster_size_eq4,
    db_to_linear,
    fused_false_alarm,
    linear_to_db,
    marcum_q,
    max_size_by_search,
    meets_requirement,
    node_detection_prob,
    node_false_alarm_prob,
    or_fusion,
    regularized_upper_gamma,
    sizing_report,
)

import oracles

N_MC = 1_000_000


def within_3se(estimate, truth, n=N_MC):
    se = math.sqrt(max(truth * (1 - truth), 1e-300) / n)
    return abs(estimate - truth) <= 3 * se


# marcum_q

def test_marcum_b_zero_is_one():
    assert marcum_q(1, 2.0, 0.0) == 1.0


def test_marcum_closed_form_a_zero():
    assert marcum_q(1, 0.0, 2.0) == pytest.approx(0.1353352832366127, abs=1e-12)


def test_marcum_order2_monte_carlo():
    rng = np.random.default_rng(11)
    est = oracles.mc_marcum_tail(2, [1.5], [1.0], N_MC, rng)[(1.5, 1.0)]
    assert within_3se(est, marcum_q(2, 1.5, 1.0))


@pytest.mark.parametrize("order", [1, 2, 3, 5, 10, 40])
@pytest.mark.parametrize("a", [0.0, 0.3, 1.0, 2.5, 6.0, 15.0])
@pytest.mark.parametrize("b", [0.1, 0.9, 2.0, 4.0, 8.0, 20.0])
def test_marcum_matches_noncentral_chi2(order, a, b):
    ref = stats.ncx2.sf(b * b, 2 * order, a * a) if a > 0 else stats.chi2.sf(b * b, 2 * order)
    assert marcum_q(order, a, b) == pytest.approx(ref, abs=1e-9)


def test_marcum_large_noncentrality_is_stable():
    # far into both tails; series must neither overflow nor go negative
    assert marcum_q(4, 40.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= marcum_q(4, 1.0, 40.0) < 1e-100


@given(st.integers(1, 8), st.floats(0, 6), st.floats(0, 6), st.floats(0, 6))
@settings(max_examples=200, deadline=None)
def test_marcum_monotone(order, a, b1, b2):
    lo, hi = sorted((b1, b2))
    assert marcum_q(order, a, hi) <= marcum_q(order, a, lo) + 1e-12
    assert marcum_q(order, a, lo) <= marcum_q(order, a + 0.5, lo) + 1e-12


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_marcum_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        marcum_q(1, bad, 1.0)
    with pytest.raises(ValueError):
        marcum_q(1, 1.0, bad)


@pytest.mark.parametrize("args", [(0, 1.0, 1.0), (1, -1.0, 1.0), (1, 1.0, -0.5), (1.5, 1.0, 1.0)])
def test_marcum_rejects_bad_domain(args):
    with pytest.raises(ValueError):
        marcum_q(*args)


# regularized_upper_gamma

def test_upper_gamma_at_zero():
    assert regularized_upper_gamma(3, 0) == 1.0


def test_upper_gamma_order_one():
    assert regularized_upper_gamma(1, 1.0) == pytest.approx(0.36787944117144233, abs=1e-12)


def test_upper_gamma_quadrature_example():
    assert regularized_upper_gamma(4, 2.5) == pytest.approx(oracles.quad_upper_gamma(4, 2.5), abs=1e-9)


@given(st.integers(1, 30), st.floats(0, 80))
@settings(max_examples=200, deadline=None)
def test_upper_gamma_in_unit_interval_and_monotone(order, x):
    g = regularized_upper_gamma(order, x)
    assert 0.0 <= g <= 1.0
    assert regularized_upper_gamma(order, x + 0.25) <= g + 1e-15


def test_upper_gamma_rejects_non_finite():
    with pytest.raises(ValueError):
        regularized_upper_gamma(2, math.nan)
    with pytest.raises(ValueError):
        regularized_upper_gamma(2, -1.0)


# node probabilities

def test_detection_zero_threshold():
    assert node_detection_prob(SensingParams(0.7, 0.0, 5)) == 1.0


def test_detection_energy_detector_monte_carlo():
    rng = np.random.default_rng(5)
    est = oracles.mc_energy_detector(0.5, 1.0, 1, N_MC, rng)
    assert within_3se(est, node_detection_prob(SensingParams(0.5, 1.0, 1)))


def test_detection_increases_with_snr():
    vals = [node_detection_prob(SensingParams(g, 8.0, 4)) for g in np.linspace(0.05, 30, 60)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0.999


def test_false_alarm_examples():
    assert node_false_alarm_prob(0.0, 3) == 1.0
    assert node_false_alarm_prob(2.0, 1) == pytest.approx(math.exp(-1), abs=1e-12)


def test_false_alarm_monte_carlo_u2():
    rng = np.random.default_rng(9)
    z = rng.standard_normal((N_MC, 4))
    est = float(np.mean((z * z).sum(axis=1) > 4.0))
    assert within_3se(est, node_false_alarm_prob(4.0, 2))


def test_false_alarm_ignores_snr():
    # P_f depends only on threshold and sample count; detection with a tiny
    # SNR converges to it
    pf = node_false_alarm_prob(6.0, 3)
    pd = node_detection_prob(SensingParams(1e-12, 6.0, 3))
    assert pd == pytest.approx(pf, abs=1e-9)


def test_sensing_params_validation():
    with pytest.raises(ValueError):
        SensingParams(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        SensingParams(1.0, -1.0, 1)
    with pytest.raises(ValueError):
        SensingParams(1.0, 1.0, 0)


def test_db_round_trip():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert linear_to_db(db_to_linear(-3.2)) == pytest.approx(-3.2)


# fusion and requirement

def test_or_fusion_examples():
    assert or_fusion([0.37]) == pytest.approx(0.37)
    assert or_fusion([0.1, 0.1]) == pytest.approx(0.19, abs=1e-15)
    assert or_fusion(FusionInput((0.2, 0.3, 0.4))) == pytest.approx(0.664, abs=1e-15)
    assert or_fusion([0.2, 0.3, 0.4]) == pytest.approx(oracles.enumerate_or([0.2, 0.3, 0.4]), abs=1e-12)


def test_or_fusion_rejects_empty_and_out_of_range():
    with pytest.raises(ValueError):
        or_fusion([])
    with pytest.raises(ValueError):
        or_fusion([0.5, 1.2])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
@settings(max_examples=100, deadline=None)
def test_or_fusion_matches_enumeration(probs):
    assert or_fusion(probs) == pytest.approx(oracles.enumerate_or(probs), abs=1e-12)


def test_meets_requirement_examples():
    req = PerformanceRequirement(0.9, 0.1, 0.01)
    assert meets_requirement(0.95, 0.05, req)
    assert meets_requirement(0.9, 0.1, req)
    assert not meets_requirement(0.89, 0.05, req)


def test_requirement_validation():
    with pytest.raises(ValueError):
        PerformanceRequirement(0.9, 0.1, 1.0)
    with pytest.raises(ValueError):
        PerformanceRequirement(0.0, 0.1, 0.01)


# cluster sizing

@pytest.mark.parametrize(
    "qf,pf,closed,search",
    [(0.19, 0.1, 2, 2), (0.1, 0.01, 11, 10), (0.5, 0.5, 1, 1), (0.5, 0.9, 1, 0)],
)
def test_sizing_examples(qf, pf, closed, search):
    req = PerformanceRequirement(0.5, qf, pf)
    assert cluster_size_eq4(req) == closed
    assert max_size_by_search(req) == search


def test_sizing_overshoot_values():
    rep = sizing_report(PerformanceRequirement(0.5, 0.1, 0.01))
    assert round(rep["closed_form_qf"], 4) == 0.1047
    assert round(rep["search_qf"], 4) == 0.0956
    assert rep["sizes_differ"] and rep["search_satisfies_qf"] and not rep["closed_form_satisfies_qf"]


def test_sizing_report_detection_check():
    rep = sizing_report(PerformanceRequirement(0.95, 0.1, 0.01), [0.9, 0.8])
    assert rep["qd"] == pytest.approx(0.98)
    assert rep["qd_satisfies"] and rep["meets_requirement"]


def test_fused_false_alarm_empty_cluster():
    assert fused_false_alarm(0.3, 0) == 0.0


@pytest.mark.parametrize("p", [0.01, 0.02, 0.05, 0.15, 0.3])
def test_single_node_at_the_limit_is_feasible(p):
    # 1 - (1 - p) rounds above p for these values; the search must still accept one node
    assert max_size_by_search(PerformanceRequirement(0.5, p, p)) == 1
