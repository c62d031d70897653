import itertools
import math

import numpy as np
import pytest
from scipy.stats import binom

from irdelay.channel import iid_spec, markov_spec, stationary_distribution
from irdelay.oracle import (
    OracleError,
    _nm_tail_enumerate,
    decode_threshold,
    exact_nf_tail,
    exact_nm_tail,
    ld_rate_check,
    trunk_of_position,
    trunk_sizes,
)
from irdelay.ratefn import alpha, lambda_n

T1 = [[0.9, 0.1], [0.4, 0.6]]


def test_decode_threshold_strict():
    assert decode_threshold(0.5, 4) == 3  # beta*l integer: need strictly more
    assert decode_threshold(0.6, 2) == 2
    assert decode_threshold(0.75, 8) == 7
    assert decode_threshold(0.1, 3) == 1


def test_trunk_sizes():
    for l, r in ((10, 3), (7, 2), (9, 4), (5, 5), (6, 3)):
        sizes = trunk_sizes(l, r)
        assert sum(sizes) == l
        assert max(sizes) - min(sizes) <= 1
        labels = trunk_of_position(l, r)
        assert [int((labels == t).sum()) for t in range(r)] == sizes
    assert trunk_sizes(6, 3) == [2, 2, 2]


def test_nf_tail_hand_values():
    assert exact_nf_tail(iid_spec(0.5), 4, 0.5, 0) == 1.0
    assert math.isclose(exact_nf_tail(iid_spec(0.5), 4, 0.5, 1), 11 / 16)
    assert math.isclose(exact_nf_tail(iid_spec(0.5), 2, 0.6, 1), 3 / 4)
    assert math.isclose(exact_nf_tail(iid_spec(0.5), 4, 0.5, 2), (11 / 16) ** 2)


def test_nf_tail_monotone():
    spec = markov_spec(1, T1)
    tails = [exact_nf_tail(spec, 6, 0.5, n) for n in range(5)]
    assert all(b <= a for a, b in zip(tails, tails[1:]))
    assert exact_nf_tail(spec, 6, 0.3, 2) <= exact_nf_tail(spec, 6, 0.7, 2)


def _brute_force_nf(spec, l, beta, n):
    """Literal sum over all l*n channel bits of the continuing chain."""
    thr = decode_threshold(beta, l)
    if spec.k == 0:
        pi, trans = None, None
    else:
        pi = stationary_distribution(spec)
        trans = spec.transition
        mask = 2 ** spec.k - 1
    total = 0.0
    for bits in itertools.product((0, 1), repeat=l * n):
        if spec.k == 0:
            ones = sum(bits)
            prob = spec.gamma ** ones * (1 - spec.gamma) ** (l * n - ones)
        else:
            state = 0
            for b in bits[: spec.k]:
                state = ((state << 1) & mask) | b
            prob = pi[state]
            for b in bits[spec.k:]:
                nxt = ((state << 1) & mask) | b
                prob *= trans[state, nxt]
                state = nxt
        if all(sum(bits[a * l:(a + 1) * l]) < thr for a in range(n)):
            total += prob
    return total


@pytest.mark.parametrize("spec", [iid_spec(0.4), markov_spec(1, T1)])
@pytest.mark.parametrize("l,n", [(3, 1), (4, 2), (5, 2), (7, 2)])
def test_nf_tail_matches_brute_force(spec, l, n):
    for beta in (0.3, 0.5):
        assert abs(exact_nf_tail(spec, l, beta, n)
                   - _brute_force_nf(spec, l, beta, n)) <= 1e-12


def test_nm_tail_hand_values():
    assert exact_nm_tail(iid_spec(0.5), 4, 0.5, 0) == 1.0
    assert math.isclose(exact_nm_tail(iid_spec(0.5), 4, 0.5, 2), 67 / 256)
    # one 2-bit trunk cannot exceed 2 = beta*l received positions
    assert math.isclose(exact_nm_tail(iid_spec(0.3), 4, 0.5, 1, r=2), 1.0)
    # near-deterministic delivery: one round suffices
    assert exact_nm_tail(iid_spec(1 - 1e-9), 4, 0.5, 1) < 1e-6


def test_nm_tail_closed_form_vs_enumeration():
    for gamma in (0.3, 0.6):
        spec = iid_spec(gamma)
        for l, n in ((4, 2), (5, 3), (6, 2)):
            for beta in (0.4, 0.6):
                assert abs(exact_nm_tail(spec, l, beta, n)
                           - _nm_tail_enumerate(spec, l, beta, n, 1)) <= 1e-12


def test_nm_tail_monotone_in_n():
    for spec in (iid_spec(0.4), markov_spec(1, T1)):
        tails = [exact_nm_tail(spec, 5, 0.6, n, r=2) for n in range(5)]
        assert all(b <= a for a, b in zip(tails, tails[1:]))


def test_oracle_budgets():
    with pytest.raises(OracleError):
        exact_nm_tail(markov_spec(1, T1), 12, 0.5, 4, r=1)  # 48 bits > 22
    with pytest.raises(OracleError):
        exact_nf_tail(markov_spec(2, [[0.7, 0.3, 0, 0],
                                      [0, 0, 0.4, 0.6],
                                      [0.5, 0.5, 0, 0],
                                      [0, 0, 0.2, 0.8]]), 1, 0.5, 1)  # l < k


def test_ld_rate_memory_converges():
    spec = iid_spec(0.5)
    beta = 0.5
    assert alpha(beta, spec) == 1
    rows = ld_rate_check(spec, beta, 2, "memory", [100, 200, 400])
    target = lambda_n(beta, spec, 2)
    assert abs(rows[-1][2] - target) / target <= 0.10
    # below alpha the tail tends to a constant, so the slope collapses
    low = iid_spec(0.25)  # alpha(0.5) = 3, so n = 2 sits below it
    rows_low = ld_rate_check(low, beta, 2, "memory", [100, 400])
    assert rows_low[-1][2] < 1e-3


def test_ld_rate_no_memory_light_tail():
    # beta < gamma: single-attempt failure decays at Lambda_1
    spec = iid_spec(0.5)
    beta = 0.25
    rows = ld_rate_check(spec, beta, 1, "no-memory", [200, 800])
    target = lambda_n(beta, spec, 1)
    assert abs(rows[-1][2] - target) / target <= 0.10


def test_nf_tail_iid_equals_binomial_power():
    spec = iid_spec(0.2)
    l, beta, n = 50, 0.25, 3
    q = float(binom.cdf(math.floor(beta * l), l, 0.2))
    assert math.isclose(exact_nf_tail(spec, l, beta, n), q ** n, rel_tol=1e-12)
