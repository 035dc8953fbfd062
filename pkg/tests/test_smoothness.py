import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopless.sampling import (build_group_sampling, enumerate_outcomes, group_sampling,
                               independent, tau_nice, with_replacement)
from loopless.smoothness import (beta_values, bounds_beta, bounds_eso, bounds_group,
                                 bounds_tau_nice, bounds_with_replacement, importance_marginals,
                                 profile_for, serial_eso_parameters)

from conftest import naive_component_grads, random_problem


def moments(problem, spec, x, y):
    """Exact second moment and variance of the sampled gradient difference."""
    n = problem.n
    V = (naive_component_grads(problem, x) - naive_component_grads(problem, y)) / n
    mean = V.sum(axis=0)
    second = var = 0.0
    for batch, prob in enumerate_outcomes(spec):
        if prob == 0.0:
            continue
        s = batch.coefficients() @ V[batch.indices] if len(batch) else np.zeros(problem.d)
        second += prob * float(s @ s)
        var += prob * float((s - mean) @ (s - mean))
    return second, var


def bregman(problem, x, y):
    return problem.f(x) - problem.f(y) - problem.full_gradient(y) @ (x - y)


def check_profile(problem, spec, prof, points=100, seed=0, check_l1=True):
    rng = np.random.default_rng(seed)
    for _ in range(points):
        x, y = rng.standard_normal(problem.d) * 2, rng.standard_normal(problem.d) * 2
        second, var = moments(problem, spec, x, y)
        D = bregman(problem, x, y)
        scale = 1.0 + second
        if check_l1:
            assert second <= 2 * prof.L1 * D + 1e-10 * scale
        assert var <= 2 * prof.L2 * D + 1e-10 * scale
        assert var <= prof.L3 * float((x - y) @ (x - y)) + 1e-10 * scale


# -- closed forms ------------------------------------------------------------

def test_tau_nice_examples():
    L = np.array([1.0, 2.0, 3.0])
    full = bounds_tau_nice(L, 2.0, 3, 3)
    assert (full.L1, full.L2, full.L3) == (pytest.approx(2.0), 0.0, 0.0)
    one = bounds_tau_nice(L, 2.0, 3, 1)
    assert one.L1 == pytest.approx(3.0) and one.L2 == pytest.approx(3.0)
    assert one.L3 == pytest.approx(14 / 3)
    assert bounds_tau_nice(L, 2.0, 3, 2).L1 == pytest.approx(2.25)
    single = bounds_tau_nice([5.0], 5.0, 1, 1)
    assert (single.L1, single.L2, single.L3) == (5.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        bounds_tau_nice(L, 2.0, 3, 4)


def test_group_examples():
    spec = independent(np.ones(3))
    prof = bounds_group([1.0, 2.0, 3.0], 1.5, 3, spec)
    assert (prof.L1, prof.L2, prof.L3) == (1.5, 0.0, 0.0)
    spec = group_sampling([0.5, 0.5], [(0, 1)])
    prof = bounds_group([1.0, 1.0], 1.0, 2, spec)
    assert (prof.L1, prof.L2, prof.L3) == (pytest.approx(2.0), pytest.approx(1.0), pytest.approx(1.0))
    p, _ = importance_marginals(np.array([1.0, 1.0, 6.0]), 2)
    prof = bounds_group([1.0, 1.0, 6.0], 1.0, 3, build_group_sampling(p, 2))
    assert prof.L2 <= 8 / 6 + 1e-12
    with pytest.raises(ValueError):
        bounds_group([1.0, 1.0], 1.0, 2, tau_nice(2, 1))


def test_replacement_examples():
    L = np.array([1.0, 2.0, 4.0])
    prof = bounds_with_replacement(L, 2.0, 3, 1, np.full(3, 1 / 3))
    assert prof.L1 == pytest.approx(4.0) and prof.L2 == pytest.approx(4.0)
    for tau in (1, 3, 7):
        prof = bounds_with_replacement(L, 2.0, 3, tau, L / L.sum())
        assert prof.L2 == pytest.approx(L.mean() / tau, rel=1e-14)
        assert prof.L3 == pytest.approx(L.mean() ** 2 / tau, rel=1e-14)
    prof = bounds_with_replacement([1.0, 3.0], 1.0, 2, 2, [0.25, 0.75])
    assert prof.L2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bounds_with_replacement([1.0, 3.0], 1.0, 2, 2, [0.0, 1.0])


def test_beta_examples():
    L = np.array([1.0, 2.0, 5.0])
    full = bounds_beta(L, independent(np.ones(3)))
    np.testing.assert_allclose(full.beta, 3.0)
    assert full.L1 == pytest.approx(5.0)
    serial = bounds_beta(L, tau_nice(3, 1))
    np.testing.assert_allclose(serial.beta, 3.0)
    assert serial.L1 == pytest.approx(5.0)
    np.testing.assert_allclose(beta_values(tau_nice(3, 2)), 3.0)


def test_eso_examples():
    A_sq = np.array([4.0, 9.0, 1.0])
    v = serial_eso_parameters(A_sq)
    prof = bounds_eso(v, np.full(3, 1 / 3), 4.0, 3, A_sq)
    assert prof.L1 == pytest.approx(9.0 / 4)
    zero = bounds_eso(np.zeros(3), np.full(3, 1 / 3), 4.0, 3, A_sq)
    assert (zero.L1, zero.L2, zero.L3) == (0.0, 0.0, 0.0)
    double = bounds_eso(2 * v, np.full(3, 1 / 3), 4.0, 3, A_sq)
    assert double.L1 == pytest.approx(2 * prof.L1) and double.L3 == pytest.approx(2 * prof.L3)
    with pytest.raises(ValueError):
        bounds_eso(None, np.full(3, 1 / 3), 4.0, 3, A_sq)


def test_eso_inequality_serial_singletons():
    # ||sum_{i in S} A_i h_i||^2 <= sum_{i in S} v_i ||h_i||^2 for single-index batches
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 3))
    v = serial_eso_parameters(np.sum(a**2, axis=1))
    for i in range(4):
        h = rng.standard_normal()
        assert np.sum((a[i] * h) ** 2) <= v[i] * h**2 * (1 + 1e-14)


# -- importance marginals ----------------------------------------------------

def test_importance_examples():
    p, pt = importance_marginals(np.ones(5), 2)
    np.testing.assert_allclose(p, 0.4)
    np.testing.assert_allclose(pt, 0.2)
    p, _ = importance_marginals(np.array([1.0, 1.0, 6.0]), 2)
    np.testing.assert_allclose(p, [0.5, 0.5, 1.0])
    p, _ = importance_marginals(np.array([1.0, 3.0, 2.0]), 3)
    np.testing.assert_allclose(p, 1.0)
    p, pt = importance_marginals(np.zeros(4), 2)
    np.testing.assert_allclose(p, 0.5)
    with pytest.raises(ValueError):
        importance_marginals(np.ones(3), 4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=30), st.floats(0.0, 1.0))
def test_importance_constraints(L, frac):
    L = np.array(L)
    n = len(L)
    tau = 1 + frac * (n - 1)
    p, pt = importance_marginals(L, tau)
    assert abs(p.sum() - tau) <= 1e-9
    assert np.all(p > 0) and np.all(p <= 1)
    if L.sum() > 0:
        Lf = np.maximum(L, 1e-9 * L.max())
        q = tau * Lf / Lf.sum()
        assert np.all(p >= np.minimum(q, 1) - 1e-12)
    assert abs(pt.sum() - 1) <= 1e-12
    practical, _ = importance_marginals(L, tau, practical=True)
    assert practical.sum() <= tau + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=25), st.integers(1, 6),
       st.floats(0.0, 1.0))
def test_importance_bounds(L, tau, lf_frac):
    L = np.array(L)
    n = len(L)
    tau = min(tau, n)
    L_bar = L.mean()
    L_f = lf_frac * L_bar
    p, pt = importance_marginals(L, tau)
    for prof in (bounds_group(L, L_f, n, build_group_sampling(p, tau)),
                 bounds_group(L, L_f, n, independent(p, tau)),
                 bounds_with_replacement(L, L_f, n, tau, pt)):
        assert prof.L1 <= L_f + L_bar / tau + 1e-12 * (1 + L_bar)
        assert prof.L2 <= L_bar / tau * (1 + 1e-12)
        assert prof.L3 <= L_bar**2 / tau * (1 + 1e-12)


def test_l2_not_above_l1():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        tau = int(rng.integers(1, n + 1))
        L = rng.exponential(size=n)
        L_f = rng.random() * L.mean()
        p, _ = importance_marginals(L, tau)
        for prof in (bounds_tau_nice(L, L_f, n, tau), bounds_group(L, L_f, n, build_group_sampling(p, tau)),
                     bounds_group(L, L_f, n, independent(p, tau))):
            assert prof.L2 <= prof.L1 + 1e-12
            assert min(prof.L1, prof.L2, prof.L3) >= 0


# -- defining inequalities by enumeration ------------------------------------

def _specs_for(problem, tau):
    n = problem.n
    p, pt = importance_marginals(problem.L_i, tau)
    return [tau_nice(n, tau), build_group_sampling(p, tau), independent(p, tau),
            with_replacement(pt, tau), with_replacement(np.full(n, 1 / n), tau)]


@pytest.mark.parametrize("loss", ["squared", "logistic"])
@pytest.mark.parametrize("n,tau", [(3, 1), (4, 2), (5, 2)])
def test_closed_form_bounds_hold(loss, n, tau):
    pb = random_problem(n, 3, loss=loss, seed=n * 10 + tau)
    for spec in _specs_for(pb, tau):
        check_profile(pb, spec, profile_for(pb, spec), points=30)
        check_profile(pb, spec, bounds_beta(pb.L_i, spec, pb.L_f), points=10)


def test_eso_singleton_bound_holds():
    pb = random_problem(4, 3, loss="logistic", seed=2)
    spec = tau_nice(4, 1)
    v = serial_eso_parameters(pb.data.row_norms_sq)
    prof = bounds_eso(v, spec.probs, pb.gamma, pb.n, pb.data.row_norms_sq)
    assert prof.L1 == pytest.approx(pb.L_max)
    check_profile(pb, spec, prof, points=30)
