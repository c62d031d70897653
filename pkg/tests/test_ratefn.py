import math

import numpy as np
import pytest
from scipy.stats import binom

from irdelay.channel import iid_as_order1, iid_spec, markov_spec
from irdelay.ratefn import (
    RateFnError,
    RateParams,
    alpha,
    build_report,
    finite_support_report,
    kronecker_power,
    lambda_n,
    lambda_n_closed_form_iid,
    lambda_o,
    lambda_n_via_optimizer,
    log_rho_n,
    memory_decay_bounds,
    mu_n,
    n_b,
    rho_n,
    threshold_classify,
    throughput_exponent,
)

T1 = [[0.9, 0.1], [0.4, 0.6]]


# ---------------------------------------------------------------- kronecker

def test_kronecker_power_small_cases():
    m = np.array([[0.7, 0.3], [0.2, 0.8]])
    assert np.array_equal(kronecker_power(m, 1), m)
    assert np.allclose(kronecker_power(np.array([[0.5]]), 4), [[0.5 ** 4]])
    k3 = kronecker_power(m, 3)
    assert np.allclose(k3.sum(axis=1), 1.0)  # stochastic stays stochastic
    assert np.isclose(k3[0, 0], 0.7 ** 3)


def test_kronecker_power_cap():
    m = np.eye(2) * 0.5 + 0.25
    with pytest.raises(RateFnError):
        kronecker_power(m, 13)  # 2^13 rows > 4096


# -------------------------------------------------------------------- rho_n

def test_rho_at_theta_zero_is_one():
    for spec in (iid_spec(0.2), markov_spec(1, T1)):
        for n in (1, 2, 3):
            assert math.isclose(rho_n(0.0, spec, n), 1.0, abs_tol=1e-10)


def test_rho_iid_closed_form():
    # MGF of the still-erased indicator: 1-(1-g)^n + (1-g)^n e^theta
    assert math.isclose(rho_n(1.0, iid_spec(0.2), 1),
                        0.2 + 0.8 * math.e, rel_tol=1e-12)
    assert math.isclose(rho_n(-2.0, iid_spec(0.3), 2),
                        1 - 0.49 + 0.49 * math.exp(-2.0), rel_tol=1e-12)


def test_rho_embedding_matches_iid():
    emb = iid_as_order1(0.35)
    flat = iid_spec(0.35)
    for n in (1, 2, 3):
        for theta in (-2.0, -0.5, 0.7, 2.0):
            assert math.isclose(rho_n(theta, emb, n),
                                rho_n(theta, flat, n), rel_tol=1e-9)


def test_log_rho_convexity():
    thetas = np.linspace(-3, 3, 25)
    for spec, n in ((iid_spec(0.25), 1), (iid_spec(0.25), 3),
                    (markov_spec(1, T1), 1), (markov_spec(1, T1), 2)):
        vals = [log_rho_n(t, spec, n) for t in thetas]
        second = np.diff(vals, 2)
        assert (second >= -1e-9).all()


# ----------------------------------------------------------------- lambda_n

def test_lambda_1_reference_value():
    assert abs(lambda_n(0.25, iid_spec(0.2), 1) - 0.0074) <= 1e-4


def test_lambda_n_closed_form_hand_value():
    # beta=0.5, gamma=0.25, n=3: mu_3 = 0.578125
    expect = 0.5 * math.log(0.5 / 0.578125) + 0.5 * math.log(0.5 / 0.421875)
    assert math.isclose(lambda_n(0.5, iid_spec(0.25), 3), expect,
                        rel_tol=1e-12)


def test_lambda_n_optimizer_agrees_with_closed_form():
    for beta in (0.2, 0.4, 0.6, 0.8):
        for gamma in (0.1, 0.3, 0.5):
            for n in (1, 2, 3):
                spec = iid_spec(gamma)
                assert abs(lambda_n_via_optimizer(beta, spec, n)
                           - lambda_n_closed_form_iid(beta, gamma, n)) <= 1e-8


def test_lambda_n_embedding_consistency():
    for beta in (0.3, 0.6):
        for gamma in (0.2, 0.4):
            for n in (1, 2, 3):
                assert abs(lambda_n(beta, iid_as_order1(gamma), n)
                           - lambda_n_closed_form_iid(beta, gamma, n)) <= 1e-8


def test_lambda_n_vanishes_at_mu_n():
    for spec in (iid_spec(0.3), markov_spec(1, T1)):
        for n in (1, 2, 3):
            assert lambda_n(mu_n(spec, n), spec, n) <= 1e-8


def test_lambda_n_nonnegative():
    for beta in (0.1, 0.5, 0.9):
        assert lambda_n(beta, iid_spec(0.4), 2) >= 0.0
        assert lambda_n(beta, markov_spec(1, T1), 2) >= 0.0


# ------------------------------------------------------------- mu_n / alpha

def test_mu_n_values():
    assert math.isclose(mu_n(iid_spec(0.25), 3), 0.578125, abs_tol=1e-12)
    seq = [mu_n(iid_spec(0.25), n) for n in range(1, 40)]
    assert all(b >= a for a, b in zip(seq, seq[1:]))
    assert seq[-1] > 0.9999


def test_alpha_values():
    assert alpha(0.75, iid_spec(0.1)) == 14
    assert alpha(0.5, iid_spec(0.25)) == 3
    assert alpha(0.2, iid_spec(0.25)) == 1  # beta < mu_1


def test_alpha_matches_ceiling_formula():
    for beta in (0.3, 0.5, 0.75, 0.9):
        for gamma in (0.1, 0.25, 0.5):
            expect = math.ceil(math.log(1 - beta) / math.log(1 - gamma))
            assert alpha(beta, iid_spec(gamma)) == max(expect, 1)


# -------------------------------------------------------- per-slot rates

def test_lambda_o_waist_multiplier_example():
    params = RateParams(beta=0.75, lam=0.01, r=1, spec=iid_spec(0.1))
    rates = lambda_o(params)
    assert rates.n1_o == 14
    assert abs(rates.lambda1_o - 0.01 / 14) <= 1e-8
    assert rates.lambda3_o == 0.01  # beta > gamma


def test_lambda3_o_below_capacity():
    # beta <= gamma, r=1: ceil(beta/gamma) = 1 so the rate is lam itself
    params = RateParams(beta=0.2, lam=0.01, r=1, spec=iid_spec(0.25))
    assert lambda_o(params).lambda3_o == 0.01
    # larger r splits the slot into fractional trunk times
    params5 = RateParams(beta=0.2, lam=0.01, r=5, spec=iid_spec(0.25))
    assert math.isclose(lambda_o(params5).lambda3_o,
                        0.01 * 5 / math.ceil(5 * 0.2 / 0.25))


def test_memory_decay_bounds_ordering():
    for beta, gamma, lam, r in ((0.5, 0.25, 0.01, 3), (0.75, 0.1, 0.01, 2),
                                (0.3, 0.4, 0.005, 4)):
        params = RateParams(beta=beta, lam=lam, r=r, spec=iid_spec(gamma))
        lower, upper, exact_r1 = memory_decay_bounds(params)
        assert lower <= upper + 1e-15
        assert exact_r1 <= lower + 1e-15


def test_memory_rate_r1_reference():
    # beta=0.5, gamma=0.25, lam=0.01: alpha=3, so the infimum sits at
    # n=2 (indicator off) giving lam/3
    params = RateParams(beta=0.5, lam=0.01, r=1, spec=iid_spec(0.25))
    _, _, exact_r1 = memory_decay_bounds(params)
    assert math.isclose(exact_r1, 0.01 / 3, rel_tol=1e-9)


# ----------------------------------------------------------- finite support

def test_finite_support_waists():
    params = RateParams(beta=0.75, lam=0.01, r=1, spec=iid_spec(0.1))
    waists = [finite_support_report(params, b)["waist"]
              for b in (200, 400, 600, 800)]
    assert waists == [2800, 5600, 8400, 11200]
    assert finite_support_report(params, 100)["waist"] * 2 == \
        finite_support_report(params, 200)["waist"]


def test_finite_support_rate_indicator_off():
    params = RateParams(beta=0.75, lam=0.01, r=1, spec=iid_spec(0.1))
    fs = finite_support_report(params, 400)
    rates = lambda_o(params)
    assert rates.n1_o > 1
    assert fs["lambda_b"] == rates.lambda1_o


# -------------------------------------------------------- threshold / n_b

def test_threshold_heavy():
    params = RateParams(beta=0.25, lam=0.01, r=1, spec=iid_spec(0.2))
    thr = threshold_classify(params)
    assert thr.kind == "heavy"
    assert abs(thr.exponent - 0.01 / lambda_n(0.25, iid_spec(0.2), 1)) <= 1e-12
    assert abs(thr.exponent - 1.354) <= 0.01
    assert not thr.zero_throughput


def test_threshold_zero_throughput_flag():
    params = RateParams(beta=0.25, lam=0.005, r=1, spec=iid_spec(0.2))
    thr = threshold_classify(params)
    assert thr.kind == "heavy" and thr.zero_throughput


def test_threshold_light_and_boundary():
    params = RateParams(beta=0.2, lam=5.0, r=1, spec=iid_spec(0.25))
    thr = threshold_classify(params)
    assert thr.kind == "light"
    assert math.isclose(thr.rate, lambda_n(0.2, iid_spec(0.25), 1))
    boundary = RateParams(beta=0.25, lam=0.01, r=1, spec=iid_spec(0.25))
    assert threshold_classify(boundary).kind == "boundary"


def test_n_b_exact_branch():
    spec = iid_spec(0.2)
    value, branch, _ = n_b(spec, 0.25, 20)
    assert branch == "exact"
    expect = 1.0 / float(binom.sf(math.floor(0.25 * 20), 20, 0.2))
    assert math.isclose(value, expect, rel_tol=1e-12)


def test_n_b_log_slope_approaches_lambda_1():
    spec = iid_spec(0.2)
    l1 = lambda_n(0.25, spec, 1)
    errs = []
    for b in (100, 400, 1600):
        value, _, _ = n_b(spec, 0.25, b)
        errs.append(abs(math.log(value) / b - l1))
    assert errs[0] > errs[1] > errs[2]


def test_throughput_exponent():
    spec = iid_spec(0.2)
    ex = throughput_exponent(RateParams(beta=0.25, lam=0.005, r=1, spec=spec))
    assert abs(ex - 0.0024) <= 1e-4
    assert ex > 0
    assert throughput_exponent(
        RateParams(beta=0.25, lam=0.05, r=1, spec=spec)) is None
    assert throughput_exponent(
        RateParams(beta=0.1, lam=0.001, r=1, spec=spec)) is None


# ------------------------------------------------------------------ report

def test_build_report_roundtrip():
    params = RateParams(beta=0.25, lam=0.01, r=1, spec=iid_spec(0.2))
    report = build_report(params, b_grid=(200, 400))
    doc = report.to_dict()
    assert doc["alpha"] == report.alpha == 2
    assert doc["threshold"]["kind"] == "heavy"
    assert set(doc["nb"]) == {"200", "400"}
    assert doc["lambda_n"]["1"] == pytest.approx(0.0074, abs=1e-4)


def test_rate_params_validation():
    with pytest.raises(ValueError):
        RateParams(beta=0.0, lam=0.01, r=1, spec=iid_spec(0.2))
    with pytest.raises(ValueError):
        RateParams(beta=0.5, lam=0.0, r=1, spec=iid_spec(0.2))
    with pytest.raises(ValueError):
        RateParams(beta=0.5, lam=0.01, r=0, spec=iid_spec(0.2))
