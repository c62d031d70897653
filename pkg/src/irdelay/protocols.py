"""Monte Carlo engine for the two retransmission protocols.

Both protocols draw one codeword length L per transfer and then consume
channel bits from a single continuing chain until the receiver can
decode, i.e. until strictly more than beta*L positions are delivered
(distinct positions, for the memory decoder).

For the i.i.d. channel the per-trial work is done in closed form on top
of the trial's own random stream, which keeps million-trial runs cheap
while sampling from exactly the same distribution as the bit-level
process:

* no-memory: attempts are independent, so the attempt count is geometric
  with the single-attempt success probability (a cached binomial tail);
* memory: each position is first delivered in a geometric round number,
  and the decode transmission follows from the order statistics of those
  rounds.

For k >= 1 the engine falls back to literal bit-by-bit simulation.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .channel import ChannelSampler, ChannelSpec
from .oracle import decode_threshold, trunk_of_position, trunk_sizes

DEFAULT_MAX_ATTEMPTS = 10_000_000


class ProtocolError(ValueError):
    """Invalid protocol configuration."""


@dataclass(frozen=True)
class CodewordDist:
    """Codeword length law: geometric from min_length, optional bound.

    The success parameter is 1 - e^{-lam} so that the log-tail slope of
    the length distribution is exactly -lam per bit. With ``bound`` set,
    lengths are conditioned on L < bound (exact, via rejection).
    ``z`` is the tail-window constant of the length law; it documents the
    regime the decay rate refers to and affects no computation.
    """

    lam: float
    bound: int | None = None
    min_length: int = 1
    z: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ProtocolError(f"lam must be > 0, got {self.lam}")
        if self.min_length < 1:
            raise ProtocolError("min_length must be >= 1")
        if self.bound is not None and self.bound <= self.min_length:
            raise ProtocolError(
                f"bound {self.bound} must exceed min_length {self.min_length}"
            )

    @property
    def geometric_p(self):
        return 1.0 - math.exp(-self.lam)

    @classmethod
    def from_mean(cls, mean, bound=None, min_length=1):
        """Derive lam from the unbounded mean length."""
        p = 1.0 / (mean - min_length + 1)
        if not (0.0 < p < 1.0):
            raise ProtocolError(f"mean {mean} incompatible with min_length")
        return cls(lam=-math.log1p(-p), bound=bound, min_length=min_length)


@dataclass(frozen=True)
class ProtocolConfig:
    spec: ChannelSpec
    dist: CodewordDist
    beta: float
    r: int = 1
    mode: str = "memory"
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ProtocolError(f"beta must be in (0,1), got {self.beta}")
        if self.mode not in ("memory", "no-memory"):
            raise ProtocolError(f"unknown mode {self.mode!r}")
        if self.mode == "no-memory" and self.r != 1:
            raise ProtocolError("the no-memory decoder sends the whole codeword"
                                " as a unit; r must be 1")
        if self.r < 1:
            raise ProtocolError("r must be >= 1")
        if self.max_attempts < 1:
            raise ProtocolError("max_attempts must be >= 1")

    def describe(self):
        d = {
            "channel": {"k": self.spec.k},
            "codeword": {
                "lam": self.dist.lam,
                "bound": self.dist.bound,
                "min_length": self.dist.min_length,
            },
            "beta": self.beta,
            "r": self.r,
            "mode": self.mode,
            "max_attempts": self.max_attempts,
        }
        if self.spec.k == 0:
            d["channel"]["gamma"] = self.spec.gamma
        else:
            d["channel"]["transition"] = self.spec.transition.tolist()
        return d


@dataclass
class TrialRecord:
    trial_index: int
    length: int
    attempts: int
    delay: int
    censored: bool


def sample_length(dist, rng):
    """One codeword length; rejection keeps the bounded law exact."""
    while True:
        l = dist.min_length - 1 + int(rng.geometric(dist.geometric_p))
        if dist.bound is None or l < dist.bound:
            return l


class _AttemptSuccessCache:
    """P[one no-memory attempt decodes | L = l] for the i.i.d. channel."""

    def __init__(self, gamma, beta):
        self.gamma = gamma
        self.beta = beta
        self._cache = {}

    def __call__(self, l):
        q = self._cache.get(l)
        if q is None:
            q = float(binom.sf(decode_threshold(self.beta, l) - 1, l, self.gamma))
            self._cache[l] = q
        return q


def _sample_geometric_attempts(p_success, rng, max_attempts):
    """Exact geometric attempt count via inverse CDF, robust for tiny p."""
    if p_success <= 0.0:
        return max_attempts, True
    if p_success >= 1.0:
        return 1, False
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    n = math.ceil(math.log(u) / math.log1p(-p_success))
    n = max(n, 1)
    if n > max_attempts:
        return max_attempts, True
    return n, False


def run_memoryless_fixed(spec, l, beta, rng, max_attempts=DEFAULT_MAX_ATTEMPTS,
                         success_prob=None):
    """(attempts, censored) for the no-memory decoder at fixed length l."""
    thr = decode_threshold(beta, l)
    if thr > l:
        return max_attempts, True
    if spec.k == 0:
        q = success_prob if success_prob is not None else float(
            binom.sf(thr - 1, l, spec.gamma)
        )
        return _sample_geometric_attempts(q, rng, max_attempts)
    sampler = ChannelSampler(spec, rng)
    for n in range(1, max_attempts + 1):
        ones = 0
        for _ in range(l):
            ones += sampler.next_bit()
        if ones >= thr:
            return n, False
    return max_attempts, True


def run_memory_fixed(spec, l, beta, r, rng, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """(attempts, delay, censored) for the memory decoder at fixed length l."""
    thr = decode_threshold(beta, l)
    sizes = trunk_sizes(l, r)
    if thr > l:
        delay = sum(sizes[(j - 1) % r] for j in range(1, max_attempts + 1))
        return max_attempts, delay, True
    if spec.k == 0:
        return _run_memory_fixed_iid(spec.gamma, l, thr, sizes, r, rng,
                                     max_attempts)
    return _run_memory_fixed_bits(spec, l, thr, sizes, r, rng, max_attempts)


def _run_memory_fixed_iid(gamma, l, thr, sizes, r, rng, max_attempts):
    # round in which each position is first delivered
    g = rng.geometric(gamma, size=l)
    # full rounds needed: the thr-th smallest first-delivery round
    m_star = int(np.partition(g, thr - 1)[thr - 1])
    if r == 1:
        n = m_star
        if n > max_attempts:
            return max_attempts, max_attempts * l, True
        return n, n * l, False
    labels = trunk_of_position(l, r)
    in_last = g == m_star
    before = g < m_star
    base = int(before.sum())
    n_within = r
    running = base
    for t in range(r):
        running += int(np.count_nonzero(in_last & (labels == t)))
        if running >= thr:
            n_within = t + 1
            break
    n = (m_star - 1) * r + n_within
    if n > max_attempts:
        full, part = divmod(max_attempts, r)
        delay = full * l + sum(sizes[:part])
        return max_attempts, delay, True
    delay = (m_star - 1) * l + sum(sizes[:n_within])
    return n, delay, False


def _run_memory_fixed_bits(spec, l, thr, sizes, r, rng, max_attempts):
    sampler = ChannelSampler(spec, rng)
    bounds = np.cumsum([0] + sizes)
    received = bytearray(l)
    count = 0
    delay = 0
    for n in range(1, max_attempts + 1):
        t = (n - 1) % r
        for i in range(bounds[t], bounds[t + 1]):
            delay += 1
            if sampler.next_bit() and not received[i]:
                received[i] = 1
                count += 1
        if count >= thr:
            return n, delay, False
    return max_attempts, delay, True


def run_memoryless(spec, dist, beta, rng, max_attempts=DEFAULT_MAX_ATTEMPTS,
                   success_cache=None, trial_index=0):
    """One no-memory transfer; delay = attempts * length."""
    l = sample_length(dist, rng)
    q = success_cache(l) if success_cache is not None else None
    n, censored = run_memoryless_fixed(spec, l, beta, rng, max_attempts,
                                       success_prob=q)
    return TrialRecord(trial_index, l, n, n * l, censored)


def run_memory(spec, dist, beta, r, rng, max_attempts=DEFAULT_MAX_ATTEMPTS,
               trial_index=0):
    """One memory-decoder transfer; delay counts bits actually sent."""
    l = sample_length(dist, rng)
    n, delay, censored = run_memory_fixed(spec, l, beta, r, rng, max_attempts)
    return TrialRecord(trial_index, l, n, delay, censored)


def trial_rng(master_seed, trial_index):
    """Per-trial stream; independent of execution order."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    )


def config_hash(config):
    payload = json.dumps(config.describe(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def run_batch(config, n_trials, master_seed):
    """n_trials independent transfers; byte-identical for identical inputs."""
    if n_trials < 1:
        raise ProtocolError("n_trials must be >= 1")
    t0 = time.perf_counter()
    records = []
    cache = None
    if config.mode == "no-memory" and config.spec.k == 0:
        cache = _AttemptSuccessCache(config.spec.gamma, config.beta)
    for i in range(n_trials):
        rng = trial_rng(master_seed, i)
        if config.mode == "no-memory":
            rec = run_memoryless(config.spec, config.dist, config.beta, rng,
                                 config.max_attempts, success_cache=cache,
                                 trial_index=i)
        else:
            rec = run_memory(config.spec, config.dist, config.beta, config.r,
                             rng, config.max_attempts, trial_index=i)
        records.append(rec)
    manifest = {
        "config": config.describe(),
        "config_hash": config_hash(config),
        "n_trials": n_trials,
        "master_seed": master_seed,
        "censored": sum(r.censored for r in records),
        "wall_time_s": time.perf_counter() - t0,
    }
    return records, manifest


def records_to_csv(records, path):
    with open(path, "w", newline="") as fh:
        fh.write("trial,length,attempts,delay,censored\n")
        for r in records:
            fh.write(f"{r.trial_index},{r.length},{r.attempts},{r.delay},"
                     f"{int(r.censored)}\n")


def records_from_csv(path):
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "trial,length,attempts,delay,censored":
            raise ProtocolError(f"unexpected trial-table header: {header!r}")
        for line in fh:
            t, l, n, d, c = line.strip().split(",")
            records.append(TrialRecord(int(t), int(l), int(n), int(d),
                                       bool(int(c))))
    return records
