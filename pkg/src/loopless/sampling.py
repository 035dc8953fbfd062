"""Minibatch sampling schemes and their unbiasing weights.

Four schemes are supported:

``tau_nice``
    uniformly random subset of fixed size ``tau``.
``independent``
    each index ``i`` included independently with probability ``p_i``.
``group``
    ``[n]`` split into disjoint groups; each group contributes at most one
    index, index ``i`` with marginal probability ``p_i``.
``replacement``
    ``tau`` independent draws from a distribution ``p_tilde`` (a multiset).

A drawn batch carries per-index weights so that ``sum_i m_i theta_i e_i``
has expectation equal to the all-ones vector.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("tau_nice", "independent", "group", "replacement")
MAX_OUTCOMES = 10**6


class EnumerationError(ValueError):
    """Raised when exhaustive enumeration would exceed the outcome guard."""


@dataclass(frozen=True)
class DrawnBatch:
    """One realization of a sampling: indices, multiplicities, weights."""

    indices: np.ndarray
    counts: np.ndarray
    theta: np.ndarray

    def __len__(self):
        return len(self.indices)

    @property
    def size(self):
        return int(self.counts.sum())

    def coefficients(self):
        """Per-entry factor ``m_i * theta_i``."""
        return self.counts * self.theta

    def weight_vector(self, n):
        """Dense ``theta_S I_S e``."""
        out = np.zeros(n)
        out[self.indices] = self.coefficients()
        return out


@dataclass(frozen=True, eq=False)
class SamplerSpec:
    """Immutable description of a sampling law.

    ``probs`` holds the marginals ``p_i`` for samplings and the draw
    distribution ``p_tilde`` for ``replacement``. ``theta`` defaults to
    ``1/p_i`` (samplings) or ``1/(tau p_tilde_i)`` (replacement).
    """

    scheme: str
    n: int
    tau: float
    probs: np.ndarray
    groups: tuple = ()
    theta: np.ndarray = None
    capped: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError("unknown scheme %r" % self.scheme)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if self.theta is None:
            if self.scheme == "replacement":
                theta = 1.0 / (self.tau * probs)
            else:
                theta = 1.0 / probs
            object.__setattr__(self, "theta", theta)
        else:
            object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        if self.scheme == "group":
            self._cache["group_layout"] = _group_layout(self.groups, probs)
        if self.scheme == "replacement":
            self._cache["alias"] = alias_table(probs)

    @property
    def expected_size(self):
        if self.scheme == "replacement":
            return float(self.tau)
        return float(self.probs.sum())

    @property
    def marginals(self):
        """``P(i in S)``; for ``replacement`` the probability of at least one copy."""
        if self.scheme == "replacement":
            return 1.0 - (1.0 - self.probs) ** self.tau
        return self.probs

    @property
    def isolated(self):
        """Boolean mask of indices forming singleton groups."""
        if self.scheme == "group":
            mask = np.zeros(self.n, dtype=bool)
            for g in self.groups:
                if len(g) == 1:
                    mask[g[0]] = True
            return mask
        if self.scheme == "independent":
            return np.ones(self.n, dtype=bool)
        return np.zeros(self.n, dtype=bool)

    def outcome_count(self):
        if self.scheme == "tau_nice":
            return math.comb(self.n, int(self.tau))
        if self.scheme == "independent":
            return 2**self.n
        if self.scheme == "group":
            return math.prod(len(g) + 1 for g in self.groups)
        return math.comb(self.n + int(self.tau) - 1, int(self.tau))

    def with_theta(self, theta):
        """Copy of the spec with custom weights (used to build bad specs in tests)."""
        return SamplerSpec(self.scheme, self.n, self.tau, self.probs, self.groups,
                           theta=theta, capped=self.capped)


# -- constructors ------------------------------------------------------------

def tau_nice(n, tau):
    if int(tau) != tau or not 1 <= tau <= n:
        raise ValueError("tau-nice sampling needs integer 1 <= tau <= n, got %r" % tau)
    tau = int(tau)
    return SamplerSpec("tau_nice", n, tau, np.full(n, tau / n))


def _check_marginals(p, tau, capped):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("marginals must be a nonempty vector")
    if np.any(~(p > 0)) or np.any(p > 1):
        raise ValueError("marginals must lie in (0, 1]")
    total = float(p.sum())
    if tau is None:
        tau = total
    if capped:
        if total > tau + 1e-9:
            raise ValueError("capped marginals sum to %g > tau = %g" % (total, tau))
    elif abs(total - tau) > 1e-9:
        raise ValueError("marginals sum to %g, expected tau = %g" % (total, tau))
    return p, float(tau)


def independent(p, tau=None, capped=False):
    p, tau = _check_marginals(p, tau, capped)
    return SamplerSpec("independent", len(p), tau, p, capped=capped)


def build_group_sampling(p, tau=None, capped=False):
    """Group sampling with the given marginals, groups formed greedily.

    Indices are scanned in the order given; the running group is closed as
    soon as adding the next index would push its mass above one. The number
    of groups is at most ``2 tau - 1`` for integer ``tau`` and below
    ``2 tau + 1`` otherwise.
    """
    p, tau = _check_marginals(p, tau, capped)
    groups, current, mass = [], [], 0.0
    for i, pi in enumerate(p):
        if current and mass + pi > 1.0 + 1e-12:
            groups.append(tuple(current))
            current, mass = [], 0.0
        current.append(i)
        mass += pi
    groups.append(tuple(current))
    if not capped:
        t = len(groups)
        expected = float(p.sum())
        if abs(expected - round(expected)) < 1e-9:
            assert t <= 2 * round(expected) - 1, (t, expected)
        else:
            assert t < 2 * expected + 1, (t, expected)
    return SamplerSpec("group", len(p), tau, p, groups=tuple(groups), capped=capped)


def group_sampling(p, groups, tau=None):
    """Group sampling over an explicit partition ``groups`` of ``[n]``."""
    p, tau = _check_marginals(p, tau, False)
    groups = tuple(tuple(int(i) for i in g) for g in groups)
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(len(p))):
        raise ValueError("groups must partition [0, n)")
    for g in groups:
        if p[list(g)].sum() > 1.0 + 1e-12:
            raise ValueError("group %s has mass above one" % (g,))
    return SamplerSpec("group", len(p), tau, p, groups=groups)


def with_replacement(p_tilde, tau):
    p_tilde = np.asarray(p_tilde, dtype=np.float64)
    if np.any(~(p_tilde > 0)):
        raise ValueError("sampling distribution must be strictly positive")
    if abs(p_tilde.sum() - 1.0) > 1e-12:
        raise ValueError("sampling distribution must sum to one")
    if int(tau) != tau or tau < 1:
        raise ValueError("copy count must be a positive integer")
    return SamplerSpec("replacement", len(p_tilde), int(tau), p_tilde)


# -- alias method ------------------------------------------------------------

def alias_table(probs):
    """Vose's alias table; returns ``(accept, alias)`` arrays."""
    n = len(probs)
    scaled = np.asarray(probs, dtype=np.float64) * n
    accept = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    return accept, alias


def _group_layout(groups, p):
    order = np.array([i for g in groups for i in g], dtype=np.int64)
    gid = np.repeat(np.arange(len(groups)), [len(g) for g in groups])
    cum = np.empty(len(order))
    mass = np.empty(len(groups))
    pos = 0
    for j, g in enumerate(groups):
        c = np.cumsum(p[list(g)])
        cum[pos:pos + len(g)] = c
        mass[j] = c[-1]
        pos += len(g)
    # shift group j by 2j so one searchsorted covers every group
    shifted = cum + 2.0 * gid
    return order, shifted, mass


# -- drawing -----------------------------------------------------------------

def _batch(spec, idx, counts=None):
    idx = np.asarray(idx, dtype=np.int64)
    if counts is None:
        counts = np.ones(len(idx), dtype=np.int64)
    return DrawnBatch(idx, counts, spec.theta[idx])


def draw(spec, rng):
    """Draw one batch from ``spec`` using generator ``rng``."""
    n = spec.n
    if spec.scheme == "tau_nice":
        tau = int(spec.tau)
        if tau == n:
            return _batch(spec, np.arange(n))
        # partial Fisher-Yates over a scratch permutation
        perm = list(range(n))
        picks = rng.integers(np.arange(tau), n)
        for k in range(tau):
            j = int(picks[k])
            perm[k], perm[j] = perm[j], perm[k]
        return _batch(spec, np.sort(perm[:tau]))
    if spec.scheme == "independent":
        return _batch(spec, np.flatnonzero(rng.random(n) < spec.probs))
    if spec.scheme == "group":
        order, shifted, mass = spec._cache["group_layout"]
        u = rng.random(len(mass))
        hit = np.flatnonzero(u < mass)
        pos = np.searchsorted(shifted, u[hit] + 2.0 * hit, side="right")
        return _batch(spec, np.sort(order[pos]))
    accept, alias = spec._cache["alias"]
    tau = int(spec.tau)
    r = rng.integers(0, n, size=tau)
    u = rng.random(tau)
    idx = np.where(u < accept[r], r, alias[r])
    uniq, counts = np.unique(idx, return_counts=True)
    return _batch(spec, uniq, counts)


# -- enumeration -------------------------------------------------------------

def enumerate_outcomes(spec, max_outcomes=MAX_OUTCOMES):
    """All outcomes of ``spec`` with their probabilities.

    Returns a list of ``(DrawnBatch, probability)``; zero-probability
    outcomes of group samplings (the empty batch of a full group) are kept.
    """
    count = spec.outcome_count()
    if count > max_outcomes:
        raise EnumerationError("%d outcomes exceed the guard of %d" % (count, max_outcomes))
    n, p = spec.n, spec.probs
    out = []
    if spec.scheme == "tau_nice":
        prob = 1.0 / count
        for c in itertools.combinations(range(n), int(spec.tau)):
            out.append((_batch(spec, c), prob))
    elif spec.scheme == "independent":
        for mask in itertools.product((False, True), repeat=n):
            m = np.array(mask)
            prob = float(np.prod(np.where(m, p, 1.0 - p)))
            out.append((_batch(spec, np.flatnonzero(m)), prob))
    elif spec.scheme == "group":
        choices = [[(None, 1.0 - p[list(g)].sum())] + [(i, p[i]) for i in g] for g in spec.groups]
        for combo in itertools.product(*choices):
            idx = sorted(i for i, _ in combo if i is not None)
            prob = math.prod(max(q, 0.0) for _, q in combo)
            out.append((_batch(spec, idx), prob))
    else:
        tau = int(spec.tau)
        for c in itertools.combinations_with_replacement(range(n), tau):
            uniq, counts = np.unique(c, return_counts=True)
            coef = math.factorial(tau) / math.prod(math.factorial(int(k)) for k in counts)
            prob = coef * float(np.prod(p[uniq] ** counts))
            out.append((_batch(spec, uniq, counts), prob))
    return out


def verify_weight_identity(spec, atol=1e-10):
    """Check ``E[theta_S I_S e] = e`` by exhaustive enumeration."""
    mean = np.zeros(spec.n)
    for batch, prob in enumerate_outcomes(spec):
        mean[batch.indices] += prob * batch.coefficients()
    return bool(np.all(np.abs(mean - 1.0) <= atol))


def exact_marginals(spec):
    """``P(i in S)`` computed by enumeration."""
    out = np.zeros(spec.n)
    for batch, prob in enumerate_outcomes(spec):
        out[batch.indices] += prob
    return out
