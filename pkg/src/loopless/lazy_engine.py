"""Delayed (lazy) coordinate updates for sparse data.

Between two touches of coordinate ``j`` the stochastic gradient reduces to
the constant anchor ``u = (1/n) G(w) e``, so the coordinate follows a fixed
scalar recursion under the elastic-net prox. These functions jump across
``t1 - t0`` such steps in closed form, splitting the interval where the
iterate changes sign. The sparse solvers built on them reproduce the dense
trajectories up to round-off.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .problem_model import prox_elastic_net, prox_scalar

logger = logging.getLogger(__name__)


@dataclass
class LazyStats:
    """Instrumentation counters for the lazy path."""

    coord_updates: int = 0
    flush_updates: int = 0
    max_depth: int = 0
    crossings: int = 0

    def note_depth(self, depth):
        if depth > self.max_depth:
            self.max_depth = depth


# -- scalar closed forms -----------------------------------------------------

def _decay(s, eta, lambda2):
    """``(alpha, 1 - alpha)`` with ``alpha = (1 + eta lambda2)^(-s)``."""
    e = -s * math.log1p(eta * lambda2)
    return math.exp(e), -math.expm1(e)


def _crossing_steps(x, c, eta, lambda2):
    """Largest ``k >= 0`` with ``alpha_k (x + c) - c >= 0`` for ``x > 0, c > 0``."""
    delta = math.log1p(x / c) / math.log1p(eta * lambda2)
    k = int(math.floor(delta)) if math.isfinite(delta) else 1 << 62
    while k > 0:
        a, one_minus_a = _decay(k, eta, lambda2)
        if a * x - one_minus_a * c >= 0.0:
            break
        k -= 1
    return k


def delayed_update(t0, t1, u, x, eta, lambda1, lambda2, stats=None, _depth=0):
    """Value at step ``t1`` of ``x <- prox(x - eta u)`` started from ``x`` at ``t0``.

    The prox is the elastic-net one with weights ``lambda1``, ``lambda2``;
    ``lambda2`` must be positive.
    """
    if lambda2 <= 0:
        raise ValueError("delayed updates need lambda2 > 0; use the dense path")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if stats is not None:
        stats.note_depth(_depth)
    s = t1 - t0
    if s == 0:
        return x
    if x < 0:
        return -delayed_update(t0, t1, -u, -x, eta, lambda1, lambda2, stats, _depth)
    a, one_minus_a = _decay(s, eta, lambda2)
    if x == 0:
        if u < -lambda1:
            return -one_minus_a * (u + lambda1) / lambda2
        if u > lambda1:
            return -one_minus_a * (u - lambda1) / lambda2
        return 0.0
    c = (u + lambda1) / lambda2
    if c <= 0:
        # fixed point -c >= 0: the iterate never leaves the positive side
        return a * x - one_minus_a * c
    k = _crossing_steps(x, c, eta, lambda2)
    if k >= s:
        return a * x - one_minus_a * c
    if stats is not None:
        stats.crossings += 1
    ak, one_minus_ak = _decay(k, eta, lambda2)
    xk = ak * x - one_minus_ak * c
    x_next = prox_scalar(xk - eta * u, eta, lambda1, lambda2)
    return delayed_update(t0 + k + 1, t1, u, x_next, eta, lambda1, lambda2, stats, _depth + 1)


def _weighted_geometric(s, q, theta3):
    """``sum_{l=1}^{s} theta3^(s-l) q^l`` without cancellation or overflow."""
    if q == 0.0:
        return 0.0
    a, b = max(q, theta3), min(q, theta3)
    if b == 0.0:
        return q * a ** (s - 1)
    if a == b:
        return q * s * a ** (s - 1)
    log_ratio = math.log1p((b - a) / a)
    series = math.expm1(s * log_ratio) / ((b - a) / a)
    return q * math.exp((s - 1) * math.log(a)) * series


def _katyusha_segment(s, y, z, w, h, q, theta1, theta2):
    """Advance ``(y, z)`` by ``s`` steps while ``z_l = q^l (z + h) - h``."""
    theta3 = 1.0 - theta1 - theta2
    qs = q**s if q > 0.0 else 0.0
    z_s = qs * z - (1.0 - qs) * h
    if theta3 <= 0.0:
        t3s, geo = 0.0, 1.0
    else:
        e = s * math.log1p(-(theta1 + theta2))
        t3s = math.exp(e)
        geo = -math.expm1(e) / (theta1 + theta2)
    y_s = theta1 * (z + h) * _weighted_geometric(s, q, theta3) + (theta2 * w - theta1 * h) * geo + t3s * y
    return y_s, z_s


def delayed_update_katyusha_l1(t0, t1, u, y, z, w, step, theta1, theta2, lambda1, lambda2,
                               stats=None, _depth=0):
    """Jump one L-Katyusha coordinate ``(y, z)`` from ``t0`` to ``t1``.

    Valid when ``f`` carries no strong convexity (``sigma1 = 0``); ``step``
    is the effective prox step ``eta / L`` and ``w`` the reference
    coordinate, constant over the interval.
    """
    if lambda2 <= 0:
        raise ValueError("delayed updates need lambda2 > 0; use the dense path")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if stats is not None:
        stats.note_depth(_depth)
    s = t1 - t0
    if s == 0:
        return y, z
    if z < 0:
        ny, nz = delayed_update_katyusha_l1(t0, t1, -u, -y, -z, -w, step, theta1, theta2,
                                            lambda1, lambda2, stats, _depth)
        return -ny, -nz
    q = 1.0 / (1.0 + step * lambda2)
    if z == 0:
        if u < -lambda1:
            h = (u + lambda1) / lambda2
        elif u > lambda1:
            h = (u - lambda1) / lambda2
        else:
            h, q = 0.0, 0.0
        return _katyusha_segment(s, y, z, w, h, q, theta1, theta2)
    h = (u + lambda1) / lambda2
    if h <= 0:
        return _katyusha_segment(s, y, z, w, h, q, theta1, theta2)
    k = _crossing_steps(z, h, step, lambda2)
    if k >= s:
        return _katyusha_segment(s, y, z, w, h, q, theta1, theta2)
    if stats is not None:
        stats.crossings += 1
    if k > 0:
        y, z = _katyusha_segment(k, y, z, w, h, q, theta1, theta2)
    z_next = prox_scalar(z - step * u, step, lambda1, lambda2)
    y_next = theta1 * z_next + theta2 * w + (1.0 - theta1 - theta2) * y
    return delayed_update_katyusha_l1(t0 + k + 1, t1, u, y_next, z_next, w, step, theta1, theta2,
                                      lambda1, lambda2, stats, _depth + 1)


def katyusha_affine_map(u, w, eta, L, theta1, theta2, sigma1, lambda2):
    """One smooth-regularizer L-Katyusha coordinate step as ``(z, y) -> A (z, y) + b``."""
    theta3 = 1.0 - theta1 - theta2
    D = eta * lambda2 + L * (1.0 + eta * sigma1)
    a11 = (eta * sigma1 * theta1 + 1.0) * L / D
    a12 = eta * sigma1 * theta3 * L / D
    b1 = (eta * sigma1 * theta2 * L * w - eta * u) / D
    A = np.array([[a11, a12], [theta1 * a11, theta3 + theta1 * a12]])
    b = np.array([b1, theta1 * b1 + theta2 * w])
    return A, b


def affine_power(A, b, s):
    """``(A^s, sum_{i<s} A^i b)`` by repeated squaring of the affine map."""
    M, c = np.eye(len(b)), np.zeros(len(b))
    PA, Pb = A, b
    while s > 0:
        if s & 1:
            # apply current power after the accumulated map
            M, c = PA @ M, PA @ c + Pb
        s >>= 1
        if s:
            PA, Pb = PA @ PA, PA @ Pb + Pb
    return M, c


def delayed_update_katyusha_l2only(t0, t1, u, y, z, w, eta, L, theta1, theta2, sigma1, lambda2,
                                   lambda1=0.0):
    """Jump one L-Katyusha coordinate when the regularizer has no l1 part."""
    if lambda1 != 0.0:
        raise ValueError("the matrix-power update needs lambda1 = 0")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if t1 == t0:
        return y, z
    A, b = katyusha_affine_map(u, w, eta, L, theta1, theta2, sigma1, lambda2)
    M, c = affine_power(A, b, t1 - t0)
    zt, yt = M @ np.array([z, y]) + c
    return float(yt), float(zt)


# -- sparse solver plumbing --------------------------------------------------

@dataclass
class LazyLedger:
    """Per-coordinate bookkeeping of when each coordinate was last advanced."""

    last: np.ndarray
    stats: LazyStats = field(default_factory=LazyStats)

    @classmethod
    def start(cls, d, k=0):
        return cls(last=np.full(d, k, dtype=np.int64))


def lazy_supported(algorithm, problem, config):
    if algorithm == "lsvrg":
        return problem.lambda2 > 0
    if problem.lambda1 == 0.0:
        return True
    return problem.lambda2 > 0 and config.sigma1 == 0.0


def materialize(problem, config, state, ledger, coords, k, algorithm):
    """Advance ``coords`` of ``state`` from their last touch to iteration ``k``."""
    last = ledger.last
    agg = state.table.aggregate
    lam1, lam2 = problem.lambda1, problem.lambda2
    stats = ledger.stats
    touched = 0
    for j in coords:
        t0 = int(last[j])
        if t0 == k:
            continue
        touched += 1
        u = float(agg[j])
        if algorithm == "lsvrg":
            state.x[j] = delayed_update(t0, k, u, float(state.x[j]), config.eta, lam1, lam2, stats)
        elif lam1 == 0.0:
            state.y[j], state.z[j] = delayed_update_katyusha_l2only(
                t0, k, u, float(state.y[j]), float(state.z[j]), float(state.w[j]), config.eta,
                config.L, config.theta1, config.theta2, config.sigma1, lam2)
        else:
            state.y[j], state.z[j] = delayed_update_katyusha_l1(
                t0, k, u, float(state.y[j]), float(state.z[j]), float(state.w[j]),
                config.eta / config.L, config.theta1, config.theta2, lam1, lam2, stats)
        last[j] = k
    return touched


def flush(problem, config, state, ledger, k, algorithm):
    """Materialize every coordinate at iteration ``k``."""
    touched = materialize(problem, config, state, ledger, range(problem.d), k, algorithm)
    ledger.stats.flush_updates += touched
    return state


def lazy_lsvrg_step(problem, state, config, batch, refresh, ledger):
    """In-place sparse L-SVRG step; same arithmetic as the dense step on touched coordinates."""
    from .solvers import correction

    k = state.k
    cols = np.unique(problem.data.gather(batch.indices)[1])
    ledger.stats.coord_updates += materialize(problem, config, state, ledger, cols, k, "lsvrg")
    cols, corr = correction(problem, state.table, state.x, batch, sparse_out=True)
    eta, lam1, lam2 = config.eta, problem.lambda1, problem.lambda2
    if refresh:
        flush(problem, config, state, ledger, k, "lsvrg")
        new_w = state.x.copy()
        g = state.table.aggregate.copy()
        g[cols] += corr
        state.x = prox_elastic_net(state.x - eta * g, eta, lam1, lam2)
        ledger.last[:] = k + 1
        ledger.stats.flush_updates += problem.d
        state.w = new_w
        state.table = problem.grad_table(new_w)
        state.refreshes += 1
    else:
        g = state.table.aggregate[cols] + corr
        state.x[cols] = prox_elastic_net(state.x[cols] - eta * g, eta, lam1, lam2)
        ledger.last[cols] = k + 1
        ledger.stats.coord_updates += len(cols)
    state.k = k + 1
    return state


def lazy_lkatyusha_step(problem, state, config, batch, refresh, ledger):
    """In-place sparse L-Katyusha step."""
    from .solvers import correction, katyusha_z_update

    k = state.k
    t1, t2 = config.theta1, config.theta2
    t3 = 1.0 - t1 - t2
    cols = np.unique(problem.data.gather(batch.indices)[1])
    ledger.stats.coord_updates += materialize(problem, config, state, ledger, cols, k, "lkatyusha")
    if refresh:
        flush(problem, config, state, ledger, k, "lkatyusha")
        x = t1 * state.z + t2 * state.w + t3 * state.y
        cols, corr = correction(problem, state.table, x, batch, sparse_out=True)
        g = state.table.aggregate.copy()
        g[cols] += corr
        z_new = katyusha_z_update(problem, config, x, state.z, g)
        new_w = x if config.refresh_to == "x" else state.y
        state.y = x + t1 * (z_new - state.z)
        state.z = z_new
        ledger.last[:] = k + 1
        ledger.stats.flush_updates += problem.d
        state.w = new_w
        state.table = problem.grad_table(new_w)
        state.refreshes += 1
    else:
        xbuf = np.zeros(problem.d)
        x_c = t1 * state.z[cols] + t2 * state.w[cols] + t3 * state.y[cols]
        xbuf[cols] = x_c
        _, corr = correction(problem, state.table, xbuf, batch, sparse_out=True)
        g = state.table.aggregate[cols] + corr
        z_c = state.z[cols]
        z_new = katyusha_z_update(problem, config, x_c, z_c, g)
        state.y[cols] = x_c + t1 * (z_new - z_c)
        state.z[cols] = z_new
        ledger.last[cols] = k + 1
        ledger.stats.coord_updates += len(cols)
    state.k = k + 1
    return state
