"""Order-k Markov-modulated binary erasure channel.

The channel emits one bit per slot: 1 = delivered, 0 = erased. For k >= 1
the distribution of the next bit depends on the previous k bits, so the
k-bit sliding window forms a Markov chain over {0,1}^k.

State encoding convention (used everywhere in this package):
a window [s_1, ..., s_k] with s_k the MOST RECENT bit maps to the integer
index sum_j s_j * 2^(k-j), i.e. the most recent bit is the least
significant bit of the index. Appending a new bit x moves state s to
((s << 1) & (2^k - 1)) | x.
"""

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


class ChannelError(ValueError):
    """Invalid channel parameters or structure."""


@dataclass(frozen=True)
class ChannelSpec:
    """Validated erasure-channel description. Immutable and thread-safe.

    k = 0 is the i.i.d. channel with per-slot delivery probability
    ``gamma``; for k >= 1, ``transition`` is the row-stochastic matrix of
    the window chain (shape 2^k x 2^k, indexed as described in the module
    docstring).
    """

    k: int
    gamma: float = 0.0
    transition: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.k < 0:
            raise ChannelError(f"memory order k must be >= 0, got {self.k}")
        if self.k == 0:
            if not (0.0 < self.gamma < 1.0):
                raise ChannelError(
                    f"i.i.d. channel needs 0 < gamma < 1, got {self.gamma}"
                )
            if self.transition is not None:
                raise ChannelError("transition matrix is only valid for k >= 1")
            return
        if self.transition is None:
            raise ChannelError("k >= 1 requires a transition matrix")
        m = np.asarray(self.transition, dtype=float)
        d = 2 ** self.k
        if m.shape != (d, d):
            raise ChannelError(
                f"transition matrix must be {d}x{d} for k={self.k}, got {m.shape}"
            )
        if np.any(m < 0):
            raise ChannelError("transition matrix entries must be >= 0")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ChannelError("every transition-matrix row must sum to 1")
        _check_window_structure(m, self.k)
        _check_primitive(m, self.k)
        object.__setattr__(self, "transition", m)
        m.setflags(write=False)

    @property
    def n_states(self):
        return 1 if self.k == 0 else 2 ** self.k


def _check_window_structure(m, k):
    """Positive mass is only allowed on window shifts s -> (s<<1)|x."""
    if k < 2:
        return  # for k = 1 every transition is a valid shift
    d = 2 ** k
    mask = d - 1
    for s in range(d):
        allowed = {((s << 1) & mask) | 0, ((s << 1) & mask) | 1}
        for u in range(d):
            if u not in allowed and m[s, u] > 0:
                raise ChannelError(
                    f"transition {s:0{k}b} -> {u:0{k}b} is not a window shift "
                    "but has positive probability"
                )


def _check_primitive(m, k):
    """Reject reducible or periodic chains.

    A primitive matrix of size d has some power <= d^2 + 1 with all
    entries positive; checking boolean reachability powers is enough.
    """
    d = 2 ** k
    reach = m > 0
    power = reach.copy()
    for _ in range(d * d + 1):
        if power.all():
            return
        power = (power.astype(int) @ reach.astype(int)) > 0
    raise ChannelError("channel chain is not irreducible and aperiodic")


def iid_spec(gamma):
    """Memoryless erasure channel with delivery probability gamma."""
    return ChannelSpec(k=0, gamma=float(gamma))


def markov_spec(k, transition):
    """Order-k channel from an explicit window transition matrix."""
    return ChannelSpec(k=int(k), transition=np.array(transition, dtype=float))


def iid_as_order1(gamma):
    """The i.i.d. channel embedded as a degenerate order-1 chain."""
    g = float(gamma)
    return markov_spec(1, [[1.0 - g, g], [1.0 - g, g]])


_stationary_cache = {}


def stationary_distribution(spec):
    """Unique stationary vector of the window chain (the scalar [1] for k=0)."""
    if spec.k == 0:
        return np.array([1.0])
    m = spec.transition
    key = (spec.k, m.tobytes())
    cached = _stationary_cache.get(key)
    if cached is not None:
        return cached
    d = m.shape[0]
    # solve pi (P - I) = 0 with the normalization sum(pi) = 1
    a = np.vstack([(m.T - np.eye(d)), np.ones(d)])
    b = np.zeros(d + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    pi.setflags(write=False)
    if len(_stationary_cache) < 256:
        _stationary_cache[key] = pi
    return pi


def capacity(spec):
    """Long-run fraction of delivered bits.

    For k >= 1 this is the stationary mass of all window states whose most
    recent bit (LSB of the index) is 1.
    """
    if spec.k == 0:
        return spec.gamma
    pi = stationary_distribution(spec)
    idx = np.arange(pi.size)
    return float(pi[(idx & 1) == 1].sum())


def erasure_indicator(spec):
    """Vector over states: 1 where the most recent bit is erased, else 0."""
    if spec.k == 0:
        return np.array([0.0])
    idx = np.arange(2 ** spec.k)
    return ((idx & 1) == 0).astype(float)


class ChannelSampler:
    """Sequential bit source for one channel realization.

    Owns its random stream. The initial k-bit window is drawn from the
    stationary distribution and its bits are emitted first, so the output
    process is stationary from slot 1.
    """

    def __init__(self, spec, rng):
        self.spec = spec
        self.rng = rng
        if spec.k == 0:
            self._pending = []
            self._p1 = None
        else:
            pi = stationary_distribution(spec)
            self.state = int(rng.choice(pi.size, p=pi))
            # window bits, oldest first (s_1 is the top bit of the index)
            self._pending = [
                (self.state >> (spec.k - 1 - j)) & 1 for j in range(spec.k)
            ]
            # delivery probability of the next bit given current state
            mask = (1 << spec.k) - 1
            self._succ = [((s << 1) & mask) | 1 for s in range(2 ** spec.k)]
            self._p1 = spec.transition[
                np.arange(2 ** spec.k), self._succ
            ].copy()

    def next_bit(self):
        if self._pending:
            return self._pending.pop(0)
        if self.spec.k == 0:
            return 1 if self.rng.random() < self.spec.gamma else 0
        x = 1 if self.rng.random() < self._p1[self.state] else 0
        mask = (1 << self.spec.k) - 1
        self.state = ((self.state << 1) & mask) | x
        return x

    def next_bits(self, n):
        return np.array([self.next_bit() for _ in range(n)], dtype=np.int8)


def sample_bits(spec, n, rng):
    """Sample n channel bits; deterministic given the rng state."""
    if n < 1:
        raise ChannelError(f"need n >= 1 bits, got {n}")
    if spec.k == 0:
        return (rng.random(n) < spec.gamma).astype(np.int8)
    return ChannelSampler(spec, rng).next_bits(n)
