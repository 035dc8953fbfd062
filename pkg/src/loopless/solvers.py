"""Loopless variance-reduced solvers: L-SVRG and L-Katyusha.

Both methods keep a reference point ``w`` with a cached gradient table and
replace the outer loop of SVRG/Katyusha by a coin flip: with probability
``p`` the reference moves to the current ``x^k`` and the table is rebuilt.

Random draws per iteration are consumed in a fixed order (batch, then
coin), which the sparse lazy path relies on to reproduce these dense
trajectories.
"""
import copy
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .problem_model import loss_derivs, prox_elastic_net
from .sampling import draw

logger = logging.getLogger(__name__)

REGIMES = ("strongly_convex", "convex", "nonconvex")
ALGORITHMS = ("lsvrg", "lkatyusha")
COLUMNS = ("iter", "epoch", "wall_seconds", "subopt", "grad_map_norm", "refreshes")


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class LSvrgConfig:
    eta: float
    p: float
    regime: str = "strongly_convex"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("step size must be positive")
        if not 0 < self.p <= 1:
            raise ValueError("refresh probability must lie in (0, 1]")
        if self.regime not in REGIMES:
            raise ValueError("unknown regime %r" % self.regime)

    def as_dict(self):
        return {"eta": self.eta, "p": self.p, "regime": self.regime}


@dataclass(frozen=True)
class LKatyushaConfig:
    theta1: float
    theta2: float
    eta: float
    L: float
    p: float
    sigma1: float = 0.0
    sigma2: float = 0.0
    case: str = ""
    # reference target on a coin success: the coupled point x^k, or y^k
    refresh_to: str = "x"

    def __post_init__(self):
        if not 0 < self.theta1 <= 1 or not 0 <= self.theta2 <= 1:
            raise ValueError("momentum weights out of range")
        if self.theta1 + self.theta2 > 1 + 1e-12:
            raise ValueError("theta1 + theta2 must not exceed one")
        if not self.eta > 0 or not self.L > 0:
            raise ValueError("eta and L must be positive")
        if not 0 < self.p <= 1:
            raise ValueError("refresh probability must lie in (0, 1]")
        if self.refresh_to not in ("x", "y"):
            raise ValueError("refresh_to must be 'x' or 'y'")

    @property
    def theta3(self):
        return 1.0 - self.theta1 - self.theta2

    def as_dict(self):
        return {"theta1": self.theta1, "theta2": self.theta2, "eta": self.eta, "L": self.L,
                "p": self.p, "sigma1": self.sigma1, "sigma2": self.sigma2, "case": self.case,
                "refresh_to": self.refresh_to}


def default_p(sampler):
    return min(1.0, sampler.expected_size / sampler.n)


def lsvrg_schedule(profile, problem, regime="strongly_convex", p=None):
    """Step size from the expected-smoothness bounds for the given regime.

    ``problem`` supplies ``L_f`` when the profile does not carry one.
    """
    if p is None:
        raise ValueError("refresh probability p is required")
    L_f = profile.L_f if profile.L_f is not None else problem.L_f
    if regime == "strongly_convex":
        if not profile.L1 > 0:
            raise ValueError("L1 must be positive")
        eta = 1.0 / (6.0 * profile.L1)
    elif regime == "convex":
        if not profile.L1 > 0 or not L_f > 0:
            raise ValueError("L1 and L_f must be positive")
        eta = min(1.0 / (8.0 * profile.L1), 1.0 / (6.0 * L_f))
    elif regime == "nonconvex":
        if not L_f > 0 or profile.L3 < 0:
            raise ValueError("need L_f > 0 and L3 >= 0")
        eta = 1.0 / (4.0 * L_f)
        if profile.L3 > 0:
            eta = min(eta,
                      p ** (2.0 / 3.0) / (36.0 ** (1.0 / 3.0) * (L_f * profile.L3) ** (1.0 / 3.0)),
                      math.sqrt(p / (6.0 * profile.L3)))
    else:
        raise ValueError("unknown regime %r" % regime)
    return LSvrgConfig(eta=eta, p=p, regime=regime)


def lkatyusha_schedule(profile, problem, p=None, refresh_to="x"):
    """Momentum weights and step size; needs ``mu > 0``.

    The returned ``case`` records which branch was taken ("1.1", "1.2",
    "2.1" or "2.2") for the Lyapunov probes.
    """
    if p is None:
        raise ValueError("refresh probability p is required")
    mu = problem.mu
    if not mu > 0:
        raise ValueError("L-Katyusha needs a strongly convex objective (mu > 0)")
    L_f = profile.L_f if profile.L_f is not None else problem.L_f
    L2 = profile.L2
    if not L_f > 0 or L2 < 0:
        raise ValueError("need L_f > 0 and L2 >= 0")
    L = max(L2, L_f)
    theta2 = L2 / (2.0 * L)
    if L2 > 0 and L_f <= L2 / p:
        r = math.sqrt(mu / (L2 * p)) * theta2
        theta1, case = (r, "1.2") if r < theta2 else (theta2, "1.1")
    else:
        r = math.sqrt(mu / L_f)
        theta1, case = (r, "2.2") if r < p / 2.0 else (p / 2.0, "2.1")
    return LKatyushaConfig(theta1=theta1, theta2=theta2, eta=1.0 / (3.0 * theta1), L=L, p=p,
                           sigma1=problem.mu_f / L, sigma2=problem.mu_psi / L, case=case,
                           refresh_to=refresh_to)


# -- state -------------------------------------------------------------------

@dataclass
class LSvrgState:
    x: np.ndarray
    w: np.ndarray
    table: object
    k: int = 0
    refreshes: int = 0

    @classmethod
    def start(cls, problem, x0=None):
        x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
        return cls(x=x, w=x.copy(), table=problem.grad_table(x))

    def iterate(self, config=None):
        return self.x

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class LKatyushaState:
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    table: object
    k: int = 0
    refreshes: int = 0

    @classmethod
    def start(cls, problem, x0=None):
        x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
        return cls(y=x.copy(), z=x.copy(), w=x.copy(), table=problem.grad_table(x))

    def x(self, config):
        return config.theta1 * self.z + config.theta2 * self.w + config.theta3 * self.y

    def iterate(self, config=None):
        return self.y

    def copy(self):
        return copy.deepcopy(self)


# -- estimator ---------------------------------------------------------------

def correction(problem, table, x, batch, sparse_out=False):
    """``(1/n) sum_{i in S} m_i theta_i (grad f_i(x) - grad f_i(w))``.

    Only the support of the sampled rows is touched. With ``sparse_out``
    the result is ``(cols, values)`` over the sorted union of supports.
    """
    if len(batch) == 0:
        empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
        return empty if sparse_out else np.zeros(problem.d)
    idx = batch.indices
    owner, cols, vals = problem.data.gather(idx)
    t = np.bincount(owner, weights=vals * x[cols], minlength=len(idx))
    dx = loss_derivs(problem.loss, t, problem.labels[idx])
    coef = batch.coefficients() * (dx - table.derivs[idx]) / problem.n
    uc, inv = np.unique(cols, return_inverse=True)
    cv = np.bincount(inv, weights=coef[owner] * vals, minlength=len(uc))
    if sparse_out:
        return uc, cv
    out = np.zeros(problem.d)
    out[uc] = cv
    return out


def estimator(problem, table, x, batch):
    """Variance-reduced gradient estimate at ``x`` anchored at ``table.point``."""
    cols, corr = correction(problem, table, x, batch, sparse_out=True)
    g = table.aggregate.copy()
    g[cols] += corr
    return g


# -- steps -------------------------------------------------------------------

def _coin(config, rng, refresh):
    if refresh is not None:
        return bool(refresh)
    if rng is None:
        raise ValueError("need a generator or an explicit refresh outcome")
    return bool(rng.random() < config.p)


def lsvrg_step(problem, state, config, batch, rng=None, refresh=None):
    """One L-SVRG iteration; returns a new state.

    The coin is drawn from ``rng`` unless ``refresh`` forces the outcome.
    """
    refresh = _coin(config, rng, refresh)
    g = estimator(problem, state.table, state.x, batch)
    x_new = prox_elastic_net(state.x - config.eta * g, config.eta, problem.lambda1, problem.lambda2)
    if refresh:
        w = state.x.copy()
        return LSvrgState(x_new, w, problem.grad_table(w), state.k + 1, state.refreshes + 1)
    return LSvrgState(x_new, state.w, state.table, state.k + 1, state.refreshes)


def katyusha_z_update(problem, config, x, z, g):
    es = config.eta * config.sigma1
    v = (es * x + z - (config.eta / config.L) * g) / (1.0 + es)
    return prox_elastic_net(v, config.eta / ((1.0 + es) * config.L), problem.lambda1, problem.lambda2)


def lkatyusha_step(problem, state, config, batch, rng=None, refresh=None):
    """One L-Katyusha iteration; returns a new state."""
    refresh = _coin(config, rng, refresh)
    x = state.x(config)
    g = estimator(problem, state.table, x, batch)
    z_new = katyusha_z_update(problem, config, x, state.z, g)
    y_new = x + config.theta1 * (z_new - state.z)
    if refresh:
        w = x if config.refresh_to == "x" else state.y.copy()
        return LKatyushaState(y_new, z_new, w, problem.grad_table(w), state.k + 1, state.refreshes + 1)
    return LKatyushaState(y_new, z_new, state.w, state.table, state.k + 1, state.refreshes)


# -- driver ------------------------------------------------------------------

@dataclass
class RunRecord:
    """Metric rows of one run plus the metadata needed to reproduce it."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    final_state: object = None
    work: object = None

    def column(self, name):
        return np.array([r[COLUMNS.index(name)] for r in self.rows], dtype=np.float64)

    def __len__(self):
        return len(self.rows)

    @property
    def last(self):
        return dict(zip(COLUMNS, self.rows[-1]))


def run(problem, sampler, algorithm, config, *, max_iter=None, max_epochs=None, seed=0,
        record_every=None, p_star=None, x0=None, lazy=False, callbacks=(), target=None):
    """Run ``algorithm`` until an iteration or epoch budget is spent.

    Epochs count one pass for the initial table, ``tau/n`` per iteration and
    one per reference refresh. A row is recorded at ``k = 0``, every
    ``record_every`` iterations and at the end. ``target`` stops the run
    once the recorded suboptimality falls to it; a callback returning
    ``True`` stops it too.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError("unknown algorithm %r" % algorithm)
    if max_iter is None and max_epochs is None:
        raise ValueError("need an iteration or epoch budget")
    n = problem.n
    tau = sampler.expected_size
    if record_every is None:
        record_every = max(1, int(n // max(1.0, tau)))
    rng = np.random.default_rng(seed)
    State = LSvrgState if algorithm == "lsvrg" else LKatyushaState
    state = State.start(problem, x0)

    ledger = None
    if lazy:
        from . import lazy_engine as lazy_mod

        if lazy_mod.lazy_supported(algorithm, problem, config):
            ledger = lazy_mod.LazyLedger.start(problem.d)
            lazy_step = lazy_mod.lazy_lsvrg_step if algorithm == "lsvrg" else lazy_mod.lazy_lkatyusha_step
        else:
            logger.info("lazy updates unavailable for these parameters; using dense steps")
    dense_step = lsvrg_step if algorithm == "lsvrg" else lkatyusha_step

    record = RunRecord(meta={"algorithm": algorithm, "scheme": sampler.scheme, "tau": tau,
                             "seed": seed, "lazy": ledger is not None, **config.as_dict()})
    t_start = time.perf_counter()

    def epochs(st):
        return 1.0 + st.k * tau / n + st.refreshes

    def emit(st):
        if ledger is not None:
            lazy_mod.flush(problem, config, st, ledger, st.k, algorithm)
        x = st.iterate(config)
        P = problem.P(x)
        sub = P - p_star if p_star is not None else float("nan")
        row = (st.k, epochs(st), time.perf_counter() - t_start, sub, problem.grad_map_norm(x),
               st.refreshes)
        record.rows.append(row)
        stop = target is not None and sub <= target
        for cb in callbacks:
            stop = bool(cb(st, row)) or stop
        return stop

    stop = emit(state)
    last_recorded = 0
    while not stop:
        if max_iter is not None and state.k >= max_iter:
            break
        if max_epochs is not None and epochs(state) >= max_epochs:
            break
        batch = draw(sampler, rng)
        refresh = bool(rng.random() < config.p)
        if ledger is not None:
            state = lazy_step(problem, state, config, batch, refresh, ledger)
        else:
            state = dense_step(problem, state, config, batch, refresh=refresh)
        if state.k % record_every == 0:
            stop = emit(state)
            last_recorded = state.k
    if last_recorded != state.k:
        emit(state)
    if ledger is not None:
        record.work = ledger.stats
    record.final_state = state
    return record
