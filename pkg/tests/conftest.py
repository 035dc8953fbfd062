import numpy as np
import pytest
from hypothesis import settings

from loopless.problem_model import make_problem

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def random_problem(n=4, d=3, loss="logistic", lambda1=0.0, lambda2=0.0, seed=0, density=1.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    if density < 1.0:
        A *= rng.random((n, d)) < density
    if loss == "squared":
        y = rng.standard_normal(n)
    else:
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return make_problem(A, y, loss, lambda1, lambda2)


def naive_phi_prime(loss, t, y):
    """Scalar loss derivatives written out independently of the package."""
    if loss == "logistic":
        return -y / (1.0 + np.exp(y * t))
    if loss == "squared":
        return t - y
    s = 1.0 / (1.0 + np.exp(-t))
    return 2.0 * (s - y) * s * (1.0 - s)


def naive_component_grads(problem, x):
    """Dense ``n x d`` matrix of component gradients."""
    A = problem.data.toarray()
    t = A @ x
    return naive_phi_prime(problem.loss, t, problem.labels)[:, None] * A


def finite_difference_grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def naive_prox(v, eta, l1, l2):
    out = np.zeros_like(v)
    for j, vj in enumerate(v):
        if vj > eta * l1:
            out[j] = (vj - eta * l1) / (1 + eta * l2)
        elif vj < -eta * l1:
            out[j] = (vj + eta * l1) / (1 + eta * l2)
    return out


def naive_lsvrg_coord(s, u, x, eta, l1, l2):
    for _ in range(s):
        x = naive_prox(np.array([x - eta * u]), eta, l1, l2)[0]
    return x


def naive_katyusha_coord(s, u, y, z, w, eta, L, t1, t2, sigma1, l1, l2):
    t3 = 1.0 - t1 - t2
    for _ in range(s):
        x = t1 * z + t2 * w + t3 * y
        v = (eta * sigma1 * x + z - eta / L * u) / (1 + eta * sigma1)
        z_new = naive_prox(np.array([v]), eta / ((1 + eta * sigma1) * L), l1, l2)[0]
        y = x + t1 * (z_new - z)
        z = z_new
    return y, z


def rel_close(a, b, rtol=1e-9, scale=1.0):
    # the naive loop itself carries absolute round-off of a few ulps of the
    # input scale, which dominates once the iterate decays towards zero
    return abs(a - b) <= rtol * max(abs(b), 1e-6 * scale)


def lsvrg_case(rng):
    x = 0.0 if rng.random() < 0.1 else rng.standard_normal() * 10 ** rng.uniform(-2, 1)
    return dict(u=rng.standard_normal(), x=x, eta=10 ** rng.uniform(-3, 0),
                l1=rng.uniform(0, 1) if rng.random() < 0.9 else 0.0, l2=10 ** rng.uniform(-3, 0),
                s=int(rng.integers(1, 201)))


def katyusha_case(rng):
    t1 = rng.uniform(0.01, 0.5)
    t2 = rng.uniform(0.0, 0.5)
    L = rng.uniform(0.5, 5.0)
    return dict(u=rng.standard_normal(), y=rng.standard_normal(),
                z=0.0 if rng.random() < 0.1 else rng.standard_normal(), w=rng.standard_normal(),
                eta=1 / (3 * t1), L=L, t1=t1, t2=t2, l1=rng.uniform(0, 1), l2=10 ** rng.uniform(-3, 0),
                s=int(rng.integers(1, 101)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""
    def report(number, ok, detail):
        line = "criterion %d: %s  %s" % (number, "PASS" if ok else "FAIL", detail)
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
