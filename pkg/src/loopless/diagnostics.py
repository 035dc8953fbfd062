"""Lyapunov probes: one-step convergence inequalities checked by enumeration.

Each probe evaluates a Lyapunov function of a solver state and its exact
conditional expectation after one step, averaging over every batch of an
enumerable sampling and both outcomes of the reference coin. The
``inequality`` helper returns the two sides of the corresponding one-step
bound so tests can assert ``lhs <= rhs``.

Probe kinds: ``strongly_convex`` (L-SVRG contraction), ``accelerated``
(L-Katyusha contraction), ``convex`` (L-SVRG descent with a merit term) and
``nonconvex`` (L-SVRG descent in ``f``). The ``accelerated`` bound tracks
``P(w)`` through a refresh, and it only follows when the reference moves to
``y^k``; configure the solver with ``refresh_to="y"`` to check it.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .sampling import enumerate_outcomes
from .solvers import LSvrgState, correction, lkatyusha_step, lsvrg_step

KINDS = ("strongly_convex", "accelerated", "convex", "nonconvex")


@dataclass(frozen=True, eq=False)
class ContractionProbe:
    kind: str
    x_star: np.ndarray
    P_star: float
    constants: dict = field(default_factory=dict)


def katyusha_q(config, problem, L2, L_f=None):
    """Lyapunov parameter ``q`` matching the branch that set ``theta1``."""
    mu, p = problem.mu, config.p
    L_f = problem.L_f if L_f is None else L_f
    if config.case in ("1.1", "2.1"):
        return 2.0 / 3.0
    if config.case == "1.2":
        return 1.0 - math.sqrt(mu / (L2 * p)) / 3.0
    if config.case == "2.2":
        return 1.0 - 2.0 / (3.0 * p) * math.sqrt(mu / L_f)
    raise ValueError("config carries no schedule case")


def make_probe(kind, problem, config, x_star, P_star=None, profile=None):
    """Probe for ``kind`` with its coefficients derived from ``config``.

    ``profile`` is needed for ``accelerated`` (``L2``) and ``nonconvex`` (``L3``).
    """
    if kind not in KINDS:
        raise ValueError("unknown probe kind %r" % kind)
    x_star = np.array(x_star, dtype=np.float64)
    if P_star is None:
        P_star = problem.P(x_star)
    eta, p = config.eta, config.p
    c = {"eta": eta, "p": p}
    if kind == "strongly_convex":
        mu_psi = problem.mu_psi
        c["D"] = 4.0 * eta**2 / (p * (1.0 + eta * mu_psi))
        c["rate_x"] = 1.0 - eta * problem.mu / (1.0 + eta * mu_psi)
        c["rate_D"] = 1.0 - p / 2.0
    elif kind == "accelerated":
        if profile is None:
            raise ValueError("accelerated probe needs the smoothness profile")
        q = katyusha_q(config, problem, profile.L2)
        sigma = problem.mu / config.L
        c.update(q=q, sigma=sigma, theta1=config.theta1, theta2=config.theta2,
                 Z=config.L * (1.0 + eta * sigma) / (2.0 * eta),
                 Y=1.0 / config.theta1,
                 W=config.theta2 / (p * q * config.theta1))
    elif kind == "convex":
        c["alpha"] = 6.0 * eta / (5.0 * p)
        c["beta"] = 5.0 / (6.0 * eta)
    else:
        if profile is None:
            raise ValueError("nonconvex probe needs the smoothness profile")
        c["alpha"] = 3.0 * eta**2 * problem.L_f * profile.L3 / p
        c["beta"] = p / (3.0 * eta)
    return ContractionProbe(kind, x_star, float(P_star), c)


def _anchor_variance(problem, probe, w, spec):
    """``E_S || (1/n) (G(w) - G(x*)) theta_S I_S e ||^2``."""
    table = problem.grad_table(probe.x_star)
    total = 0.0
    for batch, prob in enumerate_outcomes(spec):
        if prob == 0.0:
            continue
        v = correction(problem, table, w, batch)
        total += prob * float(v @ v)
    return total


def lyapunov_terms(probe, problem, state, spec=None):
    """Named parts of the Lyapunov value (they sum to it)."""
    c, xs, Ps = probe.constants, probe.x_star, probe.P_star
    if probe.kind == "strongly_convex":
        dx = state.x - xs
        return {"x": float(dx @ dx), "D": c["D"] * _anchor_variance(problem, probe, state.w, spec)}
    if probe.kind == "accelerated":
        dz = state.z - xs
        return {"Z": c["Z"] * float(dz @ dz),
                "Y": c["Y"] * (problem.P(state.y) - Ps),
                "W": c["W"] * (problem.P(state.w) - Ps)}
    if probe.kind == "convex":
        dx = state.x - xs
        return {"x": float(dx @ dx) / (2.0 * c["eta"]),
                "H": c["alpha"] * _anchor_variance(problem, probe, state.w, spec)}
    dxw = state.x - state.w
    return {"f": problem.f(state.x), "xw": c["alpha"] * float(dxw @ dxw)}


def lyapunov_value(probe, problem, state, spec=None):
    return sum(lyapunov_terms(probe, problem, state, spec).values())


def expectation_after_step(problem, state, spec, config, fn):
    """``E_k[fn(next_state)]`` over all batches and both coin outcomes."""
    step = lsvrg_step if isinstance(state, LSvrgState) else lkatyusha_step
    total = 0.0
    for batch, prob in enumerate_outcomes(spec):
        if prob == 0.0:
            continue
        for refresh, w in ((False, 1.0 - config.p), (True, config.p)):
            if w == 0.0:
                continue
            total += prob * w * fn(step(problem, state, config, batch, refresh=refresh))
    return total


def expected_one_step(probe, problem, state, spec, config):
    """Exact ``E_k[Psi^{k+1}]``."""
    return expectation_after_step(problem, state, spec, config,
                                  lambda s: lyapunov_value(probe, problem, s, spec))


def inequality(probe, problem, state, spec, config):
    """Both sides ``(lhs, rhs)`` of the probe's one-step bound."""
    c = probe.constants
    terms = lyapunov_terms(probe, problem, state, spec)
    psi = sum(terms.values())
    nxt = expected_one_step(probe, problem, state, spec, config)
    if probe.kind == "strongly_convex":
        return nxt, max(c["rate_x"], c["rate_D"]) * psi
    if probe.kind == "accelerated":
        t1, t2, q = c["theta1"], c["theta2"], c["q"]
        rhs = (terms["Z"] / (1.0 + c["eta"] * c["sigma"])
               + (1.0 - (t1 + t2 - t2 / q)) * terms["Y"]
               + (1.0 - c["p"] * (1.0 - q)) * terms["W"])
        return nxt, rhs
    if probe.kind == "convex":
        P_next = expectation_after_step(problem, state, spec, config, lambda s: problem.P(s.x))
        lhs = (P_next - probe.P_star) - 0.6 * (problem.P(state.x) - probe.P_star)
        return lhs, psi - nxt
    g = problem.full_gradient(state.x)
    return nxt, psi - c["eta"] / 4.0 * float(g @ g)


def split_contraction_bound(probe, problem, state, spec):
    """Termwise bound ``rate_x ||x - x*||^2 + rate_D D`` (tighter than the max form)."""
    c = probe.constants
    t = lyapunov_terms(probe, problem, state, spec)
    return c["rate_x"] * t["x"] + c["rate_D"] * t["D"]

