"""Large-deviation rate functions and delay-asymptotics predictions.

Everything here is about one scalar family: Lambda_n(beta), the
per-codeword-bit exponential decay rate of the probability that fewer
than a beta fraction of positions are delivered after n rounds. It is
the Legendre transform

    Lambda_n(beta) = sup_theta { theta (1 - beta) - log rho_n(theta) },

where rho_n(theta) is the Perron root of the exponentially tilted joint
transition matrix of n independent copies of the window chain (tilting
weight e^theta on joint states where the current bit is erased in all n
copies). For the i.i.d. channel this collapses to the scalar moment
generating function of a single Bernoulli erasure indicator with erasure
probability (1-gamma)^n, and the transform has the KL closed form

    beta log(beta / (1-(1-gamma)^n)) + (1-beta) log((1-beta) / (1-gamma)^n).

From Lambda_n everything else is derived: its root mu_n, the first round
count alpha at which decoding becomes typical, the per-slot decay rates
of the delay tail for the memory decoder, the heavy/light-tail threshold
for the no-memory decoder, finite-support main-body rates and waists,
and the throughput decay exponent.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .channel import ChannelSpec, capacity, erasure_indicator, iid_spec

KRONECKER_ROW_CAP = 4096
POWER_ITER_TOL = 1e-12
POWER_ITER_MAX = 100_000
THETA_BRACKET = 50.0
THETA_BRACKET_MAX = 500.0


class RateFnError(RuntimeError):
    """Numerical failure or resource limit in a rate-function computation."""


@dataclass(frozen=True)
class RateParams:
    """Inputs shared by all tail-asymptotics predictions."""

    beta: float
    lam: float
    r: int
    spec: ChannelSpec
    n_max: int = 200

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must be in (0,1), got {self.beta}")
        if self.lam <= 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.r < 1:
            raise ValueError(f"trunk count r must be >= 1, got {self.r}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")


def kronecker_power(m, n, cap=KRONECKER_ROW_CAP):
    """n-fold Kronecker power of a square matrix, with a dimension cap."""
    m = np.asarray(m, dtype=float)
    if n < 1:
        raise ValueError(f"Kronecker power needs n >= 1, got {n}")
    d = m.shape[0]
    if d ** n > cap:
        raise RateFnError(
            f"Kronecker power dimension {d}^{n} exceeds the cap of {cap} rows"
        )
    out = m
    for _ in range(n - 1):
        out = np.kron(out, m)
    return out


def _perron_root(m):
    """Dominant eigenvalue of a primitive nonnegative matrix by power iteration."""
    d = m.shape[0]
    v = np.full(d, 1.0 / d)
    rho = 0.0
    for _ in range(POWER_ITER_MAX):
        w = m @ v
        new_rho = np.linalg.norm(w)
        if new_rho == 0.0:
            raise RateFnError("power iteration collapsed to the zero vector")
        w /= new_rho
        if abs(new_rho - rho) <= POWER_ITER_TOL * new_rho and np.allclose(
            w, v, atol=1e-13, rtol=1e-10
        ):
            return new_rho
        v, rho = w, new_rho
    raise RateFnError(
        f"power iteration did not converge within {POWER_ITER_MAX} steps "
        f"(last estimate {rho})"
    )


def rho_n(theta, spec, n):
    """Tilted-chain Perron root for n parallel rounds.

    k = 0 uses the scalar closed form 1-(1-gamma)^n + (1-gamma)^n e^theta
    (the moment generating function of the still-erased-after-n-rounds
    indicator); k >= 1 scales row sigma of the joint transition matrix by
    e^theta when the current bit is erased in every copy of sigma.
    """
    if n < 1:
        raise ValueError(f"round count n must be >= 1, got {n}")
    if spec.k == 0:
        p = (1.0 - spec.gamma) ** n
        return (1.0 - p) + p * math.exp(theta)
    joint = kronecker_power(spec.transition, n)
    d_joint = kronecker_power(np.diag(erasure_indicator(spec)), n).diagonal()
    tilt = np.exp(theta * d_joint)
    return _perron_root(tilt[:, None] * joint)


def log_rho_n(theta, spec, n):
    return math.log(rho_n(theta, spec, n))


def lambda_n_closed_form_iid(beta, gamma, n):
    """KL closed form of Lambda_n for the i.i.d. channel; 0 at beta = mu_n."""
    p = (1.0 - gamma) ** n
    q = 1.0 - p
    if abs(beta - q) < 1e-15:
        return 0.0
    return beta * math.log(beta / q) + (1.0 - beta) * math.log((1.0 - beta) / p)


def _maximize_concave(obj, lo=-THETA_BRACKET, hi=THETA_BRACKET):
    """Golden-section maximum of a concave scalar function.

    The bracket doubles while the maximum sits on a boundary, up to
    +-THETA_BRACKET_MAX.
    """
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    while True:
        a, b = lo, hi
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        fc, fd = obj(c), obj(d)
        while b - a > 1e-12 * max(1.0, abs(a) + abs(b)):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = obj(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = obj(d)
        x = (a + b) / 2.0
        at_edge = abs(x - lo) < 1e-6 * (hi - lo) or abs(x - hi) < 1e-6 * (hi - lo)
        if not at_edge or (lo <= -THETA_BRACKET_MAX and hi >= THETA_BRACKET_MAX):
            if at_edge:
                raise RateFnError(
                    f"supremum over theta not attained within |theta| <= "
                    f"{THETA_BRACKET_MAX}"
                )
            return x, obj(x)
        lo, hi = max(2 * lo, -THETA_BRACKET_MAX), min(2 * hi, THETA_BRACKET_MAX)


def lambda_n(beta, spec, n):
    """sup_theta { theta(1-beta) - log rho_n(theta) }, always >= 0."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must be in (0,1), got {beta}")
    if spec.k == 0:
        return lambda_n_closed_form_iid(beta, spec.gamma, n)
    _, val = _maximize_concave(lambda t: t * (1.0 - beta) - log_rho_n(t, spec, n))
    return max(val, 0.0)


def lambda_n_via_optimizer(beta, spec, n):
    """Optimizer path regardless of k; cross-check for the k=0 closed form."""
    _, val = _maximize_concave(lambda t: t * (1.0 - beta) - log_rho_n(t, spec, n))
    return max(val, 0.0)


def mu_n(spec, n):
    """Root of beta -> Lambda_n(beta): the mean delivered fraction after n rounds.

    The joint chain is n independent copies of the window chain, so the
    stationary probability that a position is still erased after n rounds
    is (1 - capacity)^n for every memory order.
    """
    if n < 1:
        raise ValueError(f"round count n must be >= 1, got {n}")
    return 1.0 - (1.0 - capacity(spec)) ** n


def alpha(beta, spec, n_max=200):
    """First round count n with mu_n >= beta."""
    for n in range(1, n_max + 1):
        if mu_n(spec, n) >= beta:
            return n
    raise RateFnError(f"mu_n never reached beta={beta} within n_max={n_max}")


def _lambda_table(beta, spec, n_max, a):
    """Lambda_n for n = 1..n_max; zero below alpha is NOT applied here.

    Beyond the Kronecker cap (k >= 1, large n) entries are math.inf so the
    infima below simply ignore them; the interesting argmins sit at small n.
    """
    table = {}
    for n in range(1, n_max + 1):
        try:
            table[n] = lambda_n(beta, spec, n)
        except RateFnError:
            table[n] = math.inf
    return table


@dataclass
class DecayRates:
    """Per-slot decay rates of the delay tail plus their argmin indices.

    ``n1_o``/``n2_o`` follow the worked-example convention: they are the
    raw argmin over n plus one, which is the multiplier that appears in
    the finite-support waists. The raw argmins are kept alongside.
    """

    lambda1_o: float
    lambda2_o: float
    lambda3_o: float
    n1_o: int
    n2_o: int
    argmin1: int
    argmin2: int


def lambda_o(params):
    """Infima over n of the two per-slot rate sequences, plus lambda3_o."""
    spec, beta, lam = params.spec, params.beta, params.lam
    a = alpha(beta, spec, params.n_max)
    table = _lambda_table(beta, spec, params.n_max, a)
    seq1 = {
        n: (lam + (table[n] if n >= a else 0.0)) / (n + 1)
        for n in range(1, params.n_max + 1)
    }
    seq2 = {
        n: (lam + (table[n + 1] if n >= a - 1 else 0.0)) / (n + 1)
        for n in range(1, params.n_max)
    }
    argmin1 = min(seq1, key=seq1.get)
    argmin2 = min(seq2, key=seq2.get)
    gamma = capacity(spec)
    if beta > gamma:
        lambda3_o = lam
    else:
        lambda3_o = lam * params.r / math.ceil(params.r * beta / gamma)
    return DecayRates(
        lambda1_o=seq1[argmin1],
        lambda2_o=seq2[argmin2],
        lambda3_o=lambda3_o,
        n1_o=argmin1 + 1,
        n2_o=argmin2 + 1,
        argmin1=argmin1,
        argmin2=argmin2,
    )


def memory_decay_bounds(params):
    """Decay-rate bracket for the memory-decoder delay tail.

    Returns (lower, upper) valid for any r, and the exact rate for r = 1.
    """
    rates = lambda_o(params)
    lower = min(rates.lambda1_o, rates.lambda3_o)
    upper = min(rates.lambda2_o, rates.lambda3_o)
    exact_r1 = min(rates.lambda1_o, params.lam)
    return lower, upper, exact_r1


def finite_support_report(params, b):
    """Main-body decay rates and waist for bounded codeword length.

    The waist multiplier is n1_o for r = 1 and n2_o for r > 1; the waist
    itself scales linearly in the length bound b.
    """
    if b < 1:
        raise ValueError(f"length bound b must be >= 1, got {b}")
    rates = lambda_o(params)
    lam = params.lam
    lambda_b = rates.lambda1_o + min(0.0, lam - rates.lambda1_o) * (
        rates.n1_o == 1
    )
    lambda_b1 = rates.lambda1_o + min(0.0, rates.lambda3_o - rates.lambda1_o) * (
        rates.n2_o == 1
    )
    lambda_b2 = rates.lambda2_o + min(0.0, rates.lambda3_o - rates.lambda2_o) * (
        rates.n2_o == 1
    )
    mult = rates.n1_o if params.r == 1 else rates.n2_o
    return {
        "waist": mult * b,
        "waist_multiplier": mult,
        "lambda_b": lambda_b,
        "lambda_b1": lambda_b1,
        "lambda_b2": lambda_b2,
    }


@dataclass
class Threshold:
    """Tail classification of the no-memory delay.

    kind is "heavy" (power-law, exponent = lam / Lambda_1), "light"
    (exponential, rate = min(lam, Lambda_1)) or "boundary" when
    beta == gamma. zero_throughput flags a heavy tail with exponent < 1.
    """

    kind: str
    exponent: float | None = None
    rate: float | None = None
    zero_throughput: bool = False


def threshold_classify(params):
    beta, spec, lam = params.beta, params.spec, params.lam
    gamma = capacity(spec)
    l1 = lambda_n(beta, spec, 1)
    if beta == gamma:
        return Threshold(kind="boundary")
    if beta > gamma:
        exponent = lam / l1
        return Threshold(kind="heavy", exponent=exponent,
                         zero_throughput=exponent < 1.0)
    return Threshold(kind="light", rate=min(lam, l1))


def n_b(spec, beta, b, prefer_exact=True):
    """Waist scale of the heavy main body: 1 / P[decode on first attempt | L=b].

    Returns (value, branch, asymptote) where asymptote = e^{b Lambda_1}
    and branch says whether the exact single-attempt probability was
    computed or the asymptote was used.
    """
    l1 = lambda_n(beta, spec, 1)
    log_asym = b * l1
    asymptote = math.inf if log_asym > 700 else math.exp(log_asym)
    if prefer_exact:
        try:
            p_success = 1.0 - oracle.exact_nf_tail(spec, b, beta, 1)
            if p_success > 0.0:
                return 1.0 / p_success, "exact", asymptote
        except oracle.OracleError:
            pass
    return asymptote, "asymptotic", asymptote


def throughput_exponent(params):
    """Predicted minimum decay rate of throughput in b, or None if the
    hypotheses (beta > gamma and lam < Lambda_1) do not hold."""
    gamma = capacity(params.spec)
    l1 = lambda_n(params.beta, params.spec, 1)
    if params.beta <= gamma or params.lam >= l1:
        return None
    return l1 - params.lam


@dataclass
class RateReport:
    """Bundle of every analytical output for one parameter set."""

    alpha: int
    mu: dict
    lambda_n: dict
    lambda1_o: float
    lambda2_o: float
    lambda3_o: float
    n1_o: int
    n2_o: int
    memory_bounds: tuple
    memory_rate_r1: float
    finite_waist_multiplier: int
    lambda_b: float
    lambda_b1: float
    lambda_b2: float
    threshold: Threshold
    nb: dict
    throughput_exponent: float | None

    def to_dict(self):
        thr = {"kind": self.threshold.kind}
        if self.threshold.exponent is not None:
            thr["exponent"] = self.threshold.exponent
        if self.threshold.rate is not None:
            thr["rate"] = self.threshold.rate
        thr["zero_throughput"] = self.threshold.zero_throughput
        return {
            "alpha": self.alpha,
            "mu": {str(n): v for n, v in self.mu.items()},
            "lambda_n": {str(n): v for n, v in self.lambda_n.items()},
            "lambda1_o": self.lambda1_o,
            "lambda2_o": self.lambda2_o,
            "lambda3_o": self.lambda3_o,
            "n1_o": self.n1_o,
            "n2_o": self.n2_o,
            "memory_bounds": list(self.memory_bounds),
            "memory_rate_r1": self.memory_rate_r1,
            "finite_waist_multiplier": self.finite_waist_multiplier,
            "lambda_b": self.lambda_b,
            "lambda_b1": self.lambda_b1,
            "lambda_b2": self.lambda_b2,
            "threshold": thr,
            "nb": {str(b): v for b, v in self.nb.items()},
            "throughput_exponent": self.throughput_exponent,
        }


def build_report(params, b_grid=(200, 400, 600, 800), table_extra=5):
    """Evaluate every analytical quantity for one parameter set."""
    spec, beta = params.spec, params.beta
    a = alpha(beta, spec, params.n_max)
    n_table = range(1, a + table_extra + 1)
    mu_table = {n: mu_n(spec, n) for n in n_table}
    lam_table = {}
    for n in n_table:
        try:
            lam_table[n] = lambda_n(beta, spec, n)
        except RateFnError:
            break
    rates = lambda_o(params)
    lower, upper, exact_r1 = memory_decay_bounds(params)
    fs = finite_support_report(params, 1)
    nb_table = {}
    for b in b_grid:
        value, branch, asymptote = n_b(spec, beta, b)
        nb_table[b] = {"value": value, "branch": branch, "asymptote": asymptote}
    return RateReport(
        alpha=a,
        mu=mu_table,
        lambda_n=lam_table,
        lambda1_o=rates.lambda1_o,
        lambda2_o=rates.lambda2_o,
        lambda3_o=rates.lambda3_o,
        n1_o=rates.n1_o,
        n2_o=rates.n2_o,
        memory_bounds=(lower, upper),
        memory_rate_r1=exact_r1,
        finite_waist_multiplier=fs["waist_multiplier"],
        lambda_b=fs["lambda_b"],
        lambda_b1=fs["lambda_b1"],
        lambda_b2=fs["lambda_b2"],
        threshold=threshold_classify(params),
        nb=nb_table,
        throughput_exponent=throughput_exponent(params),
    )
