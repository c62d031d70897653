"""Exact conditional tail probabilities P[N > n | L = l] on small instances.

These serve as ground truth for the Monte Carlo engine and give the exact
single-attempt success probability that sets the finite-support waist
scale. Three computation routes, chosen by instance shape:

* i.i.d. channel, no-memory decoder: attempts are independent, so the
  tail is q^n with q the binomial failure probability of one attempt.
* i.i.d. channel, memory decoder with r = 1: a position is still missing
  after n rounds with probability (1-gamma)^n independently, so the tail
  is again a binomial CDF.
* everything else: exact dynamic programming over (window state, success
  count) for the no-memory decoder, or exhaustive enumeration of all
  channel realizations for the memory decoder (budgeted).

Decoding succeeds when the number of delivered (distinct, for the memory
decoder) positions strictly exceeds beta*l, i.e. reaches floor(beta*l)+1.
"""

import itertools
import math

import numpy as np
from scipy.stats import binom

from .channel import capacity, stationary_distribution

ENUM_BIT_BUDGET = 22
DP_STATE_BUDGET = 10_000_000


class OracleError(RuntimeError):
    """Instance too large for exact computation."""


def decode_threshold(beta, l):
    """Delivered-position count needed to decode: floor(beta*l) + 1."""
    return math.floor(beta * l) + 1


def trunk_sizes(l, r):
    """Near-equal trunk sizes via ceiling boundaries; they differ by <= 1."""
    bounds = [math.ceil(i * l / r) for i in range(r + 1)]
    return [bounds[i + 1] - bounds[i] for i in range(r)]


def trunk_of_position(l, r):
    """Trunk index (0-based) of each position 0..l-1."""
    out = np.empty(l, dtype=int)
    bounds = [math.ceil(i * l / r) for i in range(r + 1)]
    for t in range(r):
        out[bounds[t]:bounds[t + 1]] = t
    return out


def _binom_cdf(k, n, p):
    return float(binom.cdf(k, n, p))


def exact_nf_tail(spec, l, beta, n):
    """P[no-memory decoder needs more than n attempts | codeword length l]."""
    if n < 0:
        raise ValueError("attempt count must be >= 0")
    if n == 0:
        return 1.0
    thr = decode_threshold(beta, l)
    if thr > l:
        return 1.0
    if spec.k == 0:
        q = _binom_cdf(thr - 1, l, spec.gamma)
        return q ** n
    return _nf_tail_dp(spec, l, beta, n)


def _nf_tail_dp(spec, l, beta, n):
    """DP over (window state, ones in current attempt), bit by bit.

    The chain runs continuously across attempt boundaries; at each
    boundary mass with a decoding count is dropped and the count resets.
    The initial k-bit window is stationary and counts toward attempt 1.
    """
    k = spec.k
    d = 2 ** k
    if l < k:
        raise OracleError(f"DP needs l >= k (got l={l}, k={k})")
    if d * (l + 1) * l * n > DP_STATE_BUDGET:
        raise OracleError("no-memory DP budget exceeded")
    thr = decode_threshold(beta, l)
    pi = stationary_distribution(spec)
    trans = spec.transition
    # dist[state, c] = P[window=state, c ones so far in this attempt, all
    # previous attempts failed]
    dist = np.zeros((d, l + 1))
    for s in range(d):
        dist[s, bin(s).count("1")] = pi[s]
    pos = k  # bits consumed within the current attempt
    for _ in range(n):
        while pos < l:
            new = np.zeros_like(dist)
            mask = d - 1
            for s in range(d):
                row = dist[s]
                if not row.any():
                    continue
                u0 = (s << 1) & mask
                u1 = u0 | 1
                p1 = trans[s, u1]
                p0 = trans[s, u0]
                new[u0] += p0 * row
                new[u1, 1:] += p1 * row[:-1]
            dist = new
            pos += 1
        # attempt boundary: decoded mass leaves, the rest restarts at 0 ones
        failed = dist[:, :thr].sum(axis=1)
        dist = np.zeros_like(dist)
        dist[:, 0] = failed
        pos = 0
    return float(dist.sum())


def exact_nm_tail(spec, l, beta, n, r=1):
    """P[memory decoder needs more than n transmissions | codeword length l]."""
    if n < 0:
        raise ValueError("transmission count must be >= 0")
    if n == 0:
        return 1.0
    thr = decode_threshold(beta, l)
    if thr > l:
        return 1.0
    if spec.k == 0 and r == 1:
        # per position, still missing after n rounds w.p. (1-gamma)^n
        p_recv = 1.0 - (1.0 - spec.gamma) ** n
        return _binom_cdf(thr - 1, l, p_recv)
    return _nm_tail_enumerate(spec, l, beta, n, r)


def _nm_tail_enumerate(spec, l, beta, n, r):
    """Exact sum over all channel realizations of the first n transmissions."""
    sizes = trunk_sizes(l, r)
    bounds = np.cumsum([0] + sizes)
    total_bits = sum(sizes[(j - 1) % r] for j in range(1, n + 1))
    if total_bits > ENUM_BIT_BUDGET:
        raise OracleError(
            f"memory-decoder enumeration needs {total_bits} bits, "
            f"budget is {ENUM_BIT_BUDGET}"
        )
    thr = decode_threshold(beta, l)
    k = spec.k
    if k > 0:
        pi = stationary_distribution(spec)
        trans = spec.transition
        mask = 2 ** k - 1

    total = 0.0
    for bits in itertools.product((0, 1), repeat=total_bits):
        # probability of this channel realization
        if k == 0:
            ones = sum(bits)
            prob = spec.gamma ** ones * (1.0 - spec.gamma) ** (total_bits - ones)
        else:
            # first k bits form the stationary window, the rest transition
            if total_bits < k:
                raise OracleError("enumeration needs total bits >= k")
            state = 0
            for b in bits[:k]:
                state = ((state << 1) & mask) | b
            prob = pi[state]
            for b in bits[k:]:
                nxt = ((state << 1) & mask) | b
                prob *= trans[state, nxt]
                state = nxt
            if prob == 0.0:
                continue
        # replay the protocol on this realization
        received = [False] * l
        count = 0
        pos = 0
        decoded = False
        for j in range(1, n + 1):
            t = (j - 1) % r
            for i in range(bounds[t], bounds[t + 1]):
                if bits[pos] and not received[i]:
                    received[i] = True
                    count += 1
                pos += 1
            if count >= thr:
                decoded = True
                break
        if not decoded:
            total += prob
    return total


def ld_rate_check(spec, beta, n, mode, l_grid, r=1):
    """Finite-length log-slope table -log P[N > n | L = l] / l over l_grid.

    Converges to Lambda_n(beta)*1(n >= alpha) for the memory decoder and
    to n*Lambda_1 slope behaviour for the no-memory decoder.
    """
    rows = []
    for l in l_grid:
        if mode == "memory":
            p = exact_nm_tail(spec, l, beta, n, r)
        elif mode == "no-memory":
            p = exact_nf_tail(spec, l, beta, n)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        slope = math.inf if p == 0.0 else -math.log(p) / l
        rows.append((l, p, slope))
    return rows
