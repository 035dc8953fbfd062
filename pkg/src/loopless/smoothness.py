"""Expected-smoothness constants for variance-reduced estimators.

For a sampling ``S`` with weights ``theta`` the estimator correction
``(1/n) (G(x) - G(y)) theta_S I_S e`` is controlled by three constants:

* ``L1`` bounds its second moment by ``2 L1`` times the Bregman divergence
  of ``f`` (used with ``y = x*`` by L-SVRG);
* ``L2`` bounds its variance the same way (L-Katyusha);
* ``L3`` bounds its variance by ``L3 ||x - y||^2`` (nonconvex L-SVRG).

Closed forms are provided for tau-nice, group (including independent) and
with-replacement samplings, plus enumeration-based bounds for any small
sampling and an ESO-based bound from caller-supplied parameters.
"""
from dataclasses import dataclass

import numpy as np

from .sampling import enumerate_outcomes


@dataclass(frozen=True)
class SmoothnessProfile:
    L1: float
    L2: float
    L3: float
    source: str
    L_f: float = None
    L_bar: float = None
    beta: np.ndarray = None
    v: np.ndarray = None

    def as_dict(self):
        return {"L1": self.L1, "L2": self.L2, "L3": self.L3, "L_f": self.L_f,
                "L_bar": self.L_bar, "source": self.source}


def _as_array(L_i):
    L = np.asarray(L_i, dtype=np.float64)
    if np.any(L < 0):
        raise ValueError("smoothness constants must be nonnegative")
    return L


def bounds_tau_nice(L_i, L_f, n, tau):
    L = _as_array(L_i)
    if int(tau) != tau or not 1 <= tau <= n:
        raise ValueError("tau must be an integer in [1, n]")
    if n == 1:
        return SmoothnessProfile(float(L_f), 0.0, 0.0, "tau_nice", L_f, float(L.mean()))
    c = (n - tau) / (tau * (n - 1))
    L1 = n * (tau - 1) / (tau * (n - 1)) * L_f + c * L.max()
    L2 = c * L.max()
    L3 = c * float(np.mean(L**2))
    return SmoothnessProfile(float(L1), float(L2), float(L3), "tau_nice", L_f, float(L.mean()))


def bounds_group(L_i, L_f, n, spec):
    """Bounds for group samplings; independent samplings count as all-isolated."""
    if spec.scheme not in ("group", "independent"):
        raise ValueError("group bounds need a group or independent sampling, got %r" % spec.scheme)
    L = _as_array(L_i)
    p = spec.probs
    iso = spec.isolated
    per = np.where(iso, (1.0 / p - 1.0) * L, L / p)
    M = float(per.max())
    L3 = float(np.sum(np.where(iso, (1.0 / p - 1.0) * L**2, L**2 / p))) / n**2
    return SmoothnessProfile(L_f + M / n, M / n, L3, spec.scheme, L_f, float(L.mean()))


def bounds_with_replacement(L_i, L_f, n, tau, p_tilde):
    L = _as_array(L_i)
    p_tilde = np.asarray(p_tilde, dtype=np.float64)
    if np.any(p_tilde <= 0):
        raise ValueError("sampling distribution must be strictly positive")
    m = float(np.max(L / p_tilde))
    L1 = (1.0 - 1.0 / tau) * L_f + m / (n * tau)
    L2 = m / (n * tau)
    L3 = float(np.sum(L**2 / p_tilde)) / (n**2 * tau)
    return SmoothnessProfile(L1, L2, L3, "replacement", L_f, float(L.mean()))


def beta_values(spec):
    """``beta_i = sum_C p_C |C| m_i theta_i^2`` by enumeration.

    ``|C|`` counts multiplicity, which extends the set definition to
    multisets through the same Cauchy-Schwarz step.
    """
    beta = np.zeros(spec.n)
    for batch, prob in enumerate_outcomes(spec):
        if prob == 0.0 or len(batch) == 0:
            continue
        beta[batch.indices] += prob * batch.size * batch.counts * batch.theta**2
    return beta


def bounds_beta(L_i, spec, L_f=None):
    L = _as_array(L_i)
    n = spec.n
    beta = beta_values(spec)
    L1 = float(np.max(L * beta)) / n
    L3 = float(np.sum(beta * L**2)) / n**2
    return SmoothnessProfile(L1, L1, L3, "beta", L_f, float(L.mean()), beta=beta)


def bounds_eso(v, p, gamma, n, A_norms_sq):
    """Bounds from ESO parameters ``v_i`` (supplied by the caller).

    ``A_norms_sq`` holds ``||a_i||^2`` for each row.
    """
    if v is None:
        raise ValueError("ESO bounds need the parameters v_i")
    v = np.asarray(v, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(v < 0) or np.any(~(p > 0)) or np.any(p > 1):
        raise ValueError("need v_i >= 0 and p_i in (0, 1]")
    L1 = float(np.max(v / p)) / (n * gamma)
    L3 = float(np.sum(v * np.asarray(A_norms_sq) / p)) / (n**2 * gamma**2)
    return SmoothnessProfile(L1, L1, L3, "eso", v=v)


def serial_eso_parameters(A_norms_sq):
    """ESO parameters valid for any serial (single-index) sampling."""
    return np.asarray(A_norms_sq, dtype=np.float64).copy()


def importance_marginals(L_i, tau, practical=False):
    """Importance marginals for group sampling and replacement sampling.

    With ``q_i = tau L_i / sum L``, group marginals satisfy
    ``min(q_i, 1) <= p_i <= 1`` and ``sum p_i = tau``. Indices whose
    proportional share exceeds one are pinned at one and the remaining
    budget is spread proportionally over the rest, repeating until nothing
    exceeds one. With ``practical=True`` the marginals are just
    ``min(q_i, 1)`` and sum to at most ``tau``.

    Zero constants (empty rows) get a tiny floor so the sampling stays
    proper. Returns ``(p, p_tilde)`` with ``p_tilde_i = L_i / sum L``.
    """
    L = _as_array(L_i)
    n = len(L)
    if not 1 <= tau <= n:
        raise ValueError("tau must lie in [1, n]")
    if not np.any(L > 0):
        return np.full(n, tau / n), np.full(n, 1.0 / n)
    L = np.maximum(L, 1e-9 * L.max())
    p_tilde = L / L.sum()
    if practical:
        return np.minimum(tau * p_tilde, 1.0), p_tilde
    pinned = np.zeros(n, dtype=bool)
    while True:
        budget = tau - pinned.sum()
        free = ~pinned
        p = np.ones(n)
        if budget > 0 and free.any():
            p[free] = budget * L[free] / L[free].sum()
        over = free & (p > 1.0)
        if not over.any():
            break
        pinned |= over
    # round-off can leave a free index a hair above one
    p = np.minimum(p, 1.0)
    return p, p_tilde


def profile_for(problem, spec):
    """Closed-form profile matching the scheme of ``spec``."""
    L, L_f, n = problem.L_i, problem.L_f, problem.n
    if spec.scheme == "tau_nice":
        return bounds_tau_nice(L, L_f, n, spec.tau)
    if spec.scheme in ("group", "independent"):
        return bounds_group(L, L_f, n, spec)
    return bounds_with_replacement(L, L_f, n, spec.tau, spec.probs)
