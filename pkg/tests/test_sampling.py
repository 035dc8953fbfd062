import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopless import sampling
from loopless.sampling import (EnumerationError, alias_table, build_group_sampling, draw,
                               enumerate_outcomes, exact_marginals, group_sampling, independent,
                               tau_nice, verify_weight_identity, with_replacement)
from loopless.smoothness import importance_marginals


def _freqs(spec, key, draws=100_000, seed=0):
    rng = np.random.default_rng(seed)
    counts = {}
    for _ in range(draws):
        b = draw(spec, rng)
        k = key(b)
        counts[k] = counts.get(k, 0) + 1
    return counts


def _within_4_sigma(count, prob, draws):
    sigma = math.sqrt(draws * prob * (1 - prob))
    return abs(count - draws * prob) <= 4 * sigma + 1e-9


# -- group construction ------------------------------------------------------

def test_group_single_index():
    spec = build_group_sampling([1.0], 1)
    assert spec.groups == ((0,),)
    assert spec.isolated.tolist() == [True]


def test_group_greedy_trace():
    spec = build_group_sampling([0.6, 0.5, 0.5, 0.4], 2)
    assert spec.groups == ((0,), (1, 2), (3,))
    assert len(spec.groups) == 2 * 2 - 1
    np.testing.assert_allclose(exact_marginals(spec), spec.probs, atol=1e-12)
    assert spec.isolated.tolist() == [True, False, False, True]


def test_group_pairs():
    spec = build_group_sampling([0.5] * 4, 2)
    assert spec.groups == ((0, 1), (2, 3))
    np.testing.assert_allclose(exact_marginals(spec), 0.5, atol=1e-12)


def test_group_rejects_bad_marginals():
    with pytest.raises(ValueError):
        build_group_sampling([0.0, 1.0], 1)
    with pytest.raises(ValueError):
        build_group_sampling([1.5, 0.5], 2)
    with pytest.raises(ValueError):
        build_group_sampling([0.5, 0.5], 2)


def test_explicit_groups_validated():
    with pytest.raises(ValueError):
        group_sampling([0.5, 0.5, 1.0], [(0, 1)])
    with pytest.raises(ValueError):
        group_sampling([0.7, 0.7, 0.6], [(0, 1), (2,)])
    spec = group_sampling([0.5, 0.5, 1.0], [(0, 1), (2,)])
    assert verify_weight_identity(spec)


def _random_marginals(rng, tau, fractional):
    n = int(rng.integers(max(tau, 1), 3 * tau + 6))
    t = tau + 0.5 if fractional and tau + 0.5 <= n else tau
    L = rng.exponential(size=n) ** 2
    p, _ = importance_marginals(L, t)
    return p, t


def test_group_count_bound_random():
    rng = np.random.default_rng(7)
    for trial in range(1000):
        tau = int(rng.integers(1, 9))
        p, t = _random_marginals(rng, tau, fractional=trial % 2 == 1)
        spec = build_group_sampling(p, t)
        count = len(spec.groups)
        if float(t).is_integer():
            assert count <= 2 * t - 1
        else:
            assert count < 2 * t + 1
        for g in spec.groups:
            assert p[list(g)].sum() <= 1 + 1e-12


# -- drawing -----------------------------------------------------------------

def test_independent_all_ones():
    spec = independent(np.ones(4))
    b = draw(spec, np.random.default_rng(0))
    assert b.indices.tolist() == [0, 1, 2, 3]
    np.testing.assert_array_equal(b.theta, 1.0)


def test_group_draw_frequencies():
    spec = group_sampling([0.5, 0.5], [(0, 1)])
    draws = 100_000
    counts = _freqs(spec, lambda b: tuple(b.indices.tolist()), draws)
    assert counts.get((), 0) == 0
    assert _within_4_sigma(counts[(0,)], 0.5, draws)
    assert _within_4_sigma(counts[(1,)], 0.5, draws)


def test_replacement_draw_frequencies():
    spec = with_replacement([0.5, 0.5], 2)
    draws = 100_000
    counts = _freqs(spec, lambda b: tuple(zip(b.indices.tolist(), b.counts.tolist())), draws)
    both = counts.get(((0, 1), (1, 1)), 0)
    two_zero = counts.get(((0, 2),), 0)
    assert _within_4_sigma(both, 0.5, draws)
    assert _within_4_sigma(two_zero, 0.25, draws)


def test_replacement_batch_invariants():
    spec = with_replacement([0.1, 0.2, 0.7], 4)
    rng = np.random.default_rng(1)
    for _ in range(100):
        b = draw(spec, rng)
        assert b.size == 4
        np.testing.assert_allclose(b.theta, 1 / (4 * spec.probs[b.indices]))


def test_alias_table_reproduces_distribution():
    rng = np.random.default_rng(2)
    for n in (1, 2, 7, 50):
        p = rng.random(n) + 0.01
        p /= p.sum()
        accept, alias = alias_table(p)
        implied = accept / n
        np.add.at(implied, alias, (1 - accept) / n)
        np.testing.assert_allclose(implied, p, atol=1e-14)


def test_determinism():
    for spec in (tau_nice(10, 3), independent(np.full(10, 0.3)),
                 build_group_sampling(np.full(10, 0.3), 3), with_replacement(np.full(10, 0.1), 3)):
        r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
        for _ in range(50):
            b1, b2 = draw(spec, r1), draw(spec, r2)
            np.testing.assert_array_equal(b1.indices, b2.indices)
            np.testing.assert_array_equal(b1.counts, b2.counts)


def test_tau_nice_draws_are_subsets():
    spec = tau_nice(6, 4)
    rng = np.random.default_rng(0)
    for _ in range(200):
        b = draw(spec, rng)
        assert len(set(b.indices.tolist())) == 4
        np.testing.assert_allclose(b.theta, 6 / 4)
    with pytest.raises(ValueError):
        tau_nice(3, 4)
    with pytest.raises(ValueError):
        tau_nice(3, 1.5)


# -- enumeration and identities ----------------------------------------------

def test_enumerate_tau_nice():
    out = enumerate_outcomes(tau_nice(3, 2))
    assert len(out) == 3
    assert all(prob == pytest.approx(1 / 3) for _, prob in out)


def test_enumerate_independent():
    out = [(b.indices.tolist(), pr) for b, pr in enumerate_outcomes(independent([0.5, 1.0])) if pr > 0]
    assert sorted(out) == [([0, 1], 0.5), ([1], 0.5)]


def test_enumerate_group():
    out = sorted((b.indices.tolist(), pr) for b, pr in enumerate_outcomes(group_sampling([0.5, 0.5], [(0, 1)])))
    assert out == [([], 0.0), ([0], 0.5), ([1], 0.5)]


def test_enumeration_guard():
    with pytest.raises(EnumerationError):
        enumerate_outcomes(independent(np.full(30, 0.5)))
    with pytest.raises(EnumerationError):
        enumerate_outcomes(tau_nice(60, 30))


def test_weight_identity_examples():
    assert verify_weight_identity(tau_nice(5, 2))
    spec = build_group_sampling([0.6, 0.5, 0.5, 0.4], 2)
    assert verify_weight_identity(spec)
    assert not verify_weight_identity(spec.with_theta(2.0 / spec.probs))


def _enumerable_specs(rng):
    out = []
    for n in (1, 2, 3, 4, 5):
        for tau in (1, 2):
            if tau > n:
                continue
            p, pt = importance_marginals(rng.exponential(size=n), tau)
            out += [tau_nice(n, tau), independent(p, tau), build_group_sampling(p, tau),
                    with_replacement(pt, tau), with_replacement(np.full(n, 1 / n), tau)]
    return out


def test_enumerated_probabilities_and_marginals():
    rng = np.random.default_rng(3)
    for spec in _enumerable_specs(rng):
        outs = enumerate_outcomes(spec)
        assert sum(pr for _, pr in outs) == pytest.approx(1.0, abs=1e-12)
        assert verify_weight_identity(spec)
        np.testing.assert_allclose(exact_marginals(spec), spec.marginals, atol=1e-12)


@pytest.mark.parametrize("maker", [
    lambda: tau_nice(5, 2),
    lambda: independent([0.2, 0.9, 0.4, 0.5]),
    lambda: build_group_sampling([0.3, 0.3, 0.5, 0.4, 0.5], 2),
    lambda: with_replacement([0.1, 0.2, 0.3, 0.4], 2),
])
def test_monte_carlo_marginals(maker):
    spec = maker()
    draws = 100_000
    rng = np.random.default_rng(4)
    hits = np.zeros(spec.n)
    for _ in range(draws):
        hits[draw(spec, rng).indices] += 1
    for i in range(spec.n):
        assert _within_4_sigma(hits[i], spec.marginals[i], draws)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 5.0), min_size=1, max_size=9), st.integers(1, 4))
def test_weight_identity_property(L, tau):
    tau = min(tau, len(L))
    p, pt = importance_marginals(np.array(L), tau)
    for spec in (build_group_sampling(p, tau), with_replacement(pt, min(tau, 2))):
        if spec.outcome_count() <= 5000:
            assert verify_weight_identity(spec, atol=1e-10)


def test_capped_marginals_flagged():
    p, _ = importance_marginals(np.array([1.0, 1.0, 6.0]), 2, practical=True)
    spec = build_group_sampling(p, 2, capped=True)
    assert spec.capped and spec.expected_size <= 2
    assert verify_weight_identity(spec)
    with pytest.raises(ValueError):
        build_group_sampling(p, 2)


def test_replacement_validation():
    with pytest.raises(ValueError):
        with_replacement([0.0, 1.0], 1)
    with pytest.raises(ValueError):
        with_replacement([0.3, 0.3], 1)
    with pytest.raises(ValueError):
        with_replacement([0.5, 0.5], 0)
    assert sampling.SCHEMES == ("tau_nice", "independent", "group", "replacement")
