"""Composite finite-sum objectives built on generalized linear models.

The objective is

    P(x) = (1/n) sum_i phi_i(a_i^T x) + psi(x),
    psi(x) = (lambda2 / 2) ||x||^2 + lambda1 ||x||_1,

with sparse rows ``a_i`` and a scalar loss ``phi_i``. The ridge term lives in
``psi`` so ``mu_f = 0`` and ``mu_psi = lambda2``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit

LOSSES = ("logistic", "squared", "sigmoid_squared")

# phi_i is (1/gamma)-smooth
_GAMMA = {"logistic": 4.0, "squared": 1.0, "sigmoid_squared": 2.0}


class DesignMatrix:
    """Immutable CSR design matrix with cached squared row norms.

    Rows are stored as ``indptr``/``indices``/``data`` arrays, exactly the
    layout of :class:`scipy.sparse.csr_matrix`, with column indices strictly
    increasing inside each row.
    """

    def __init__(self, indptr, indices, data, d):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=np.float64)
        if indptr.ndim != 1 or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("malformed indptr")
        if indices.shape != data.shape or indptr[-1] != len(indices):
            raise ValueError("indices/data do not match indptr")
        if len(indices) and (indices.min() < 0 or indices.max() >= d):
            raise ValueError("feature index out of range [0, %d)" % d)
        for i in range(len(indptr) - 1):
            seg = indices[indptr[i]:indptr[i + 1]]
            if np.any(np.diff(seg) <= 0):
                raise ValueError("indices of row %d are not strictly increasing" % i)
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self.n = len(indptr) - 1
        self.d = int(d)
        row_ids = np.repeat(np.arange(self.n), np.diff(indptr))
        self.row_norms_sq = np.bincount(row_ids, weights=np.square(data), minlength=self.n)
        for arr in (self.indptr, self.indices, self.data, self.row_norms_sq):
            arr.setflags(write=False)
        self._csr = sparse.csr_matrix((data, indices, indptr), shape=(self.n, self.d))

    @classmethod
    def from_dense(cls, A):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        return cls.from_scipy(sparse.csr_matrix(A))

    @classmethod
    def from_scipy(cls, M):
        M = sparse.csr_matrix(M, dtype=np.float64)
        M.eliminate_zeros()
        M.sort_indices()
        return cls(M.indptr, M.indices, M.data, M.shape[1])

    @classmethod
    def from_rows(cls, rows, d):
        """Build from a list of ``[(feature, value), ...]`` rows."""
        indptr = [0]
        indices, data = [], []
        for row in rows:
            for j, v in row:
                indices.append(j)
                data.append(v)
            indptr.append(len(indices))
        return cls(indptr, indices, data, d)

    @property
    def shape(self):
        return (self.n, self.d)

    @property
    def nnz(self):
        return len(self.data)

    def tocsr(self):
        return self._csr

    def toarray(self):
        return self._csr.toarray()

    def row(self, i):
        """Return ``(indices, values)`` of row ``i``."""
        if not 0 <= i < self.n:
            raise IndexError("row index %d out of range [0, %d)" % (i, self.n))
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_nnz(self, i):
        return int(self.indptr[i + 1] - self.indptr[i])

    def gather(self, rows):
        """Concatenate the sparsity patterns of ``rows``.

        Returns ``(owner, cols, vals)`` where ``owner[k]`` is the position in
        ``rows`` of the entry ``(cols[k], vals[k])``.
        """
        rows = np.asarray(rows, dtype=np.int64)
        starts = self.indptr[rows]
        lens = self.indptr[rows + 1] - starts
        total = int(lens.sum())
        owner = np.repeat(np.arange(len(rows)), lens)
        offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        pos = np.repeat(starts, lens) + offsets
        return owner, self.indices[pos], self.data[pos]

    def matvec(self, x):
        return self._csr @ x

    def rmatvec(self, v):
        return self._csr.T @ v


def _coerce_labels(loss, y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if loss == "logistic":
        values = set(np.unique(y).tolist())
        if values <= {-1.0, 1.0}:
            return y.copy()
        if values <= {0.0, 1.0}:
            return 2.0 * y - 1.0
        raise ValueError("logistic labels must lie in {-1, +1} or {0, 1}")
    if loss == "sigmoid_squared":
        values = set(np.unique(y).tolist())
        if values <= {0.0, 1.0}:
            return y.copy()
        if values <= {-1.0, 1.0}:
            return (y + 1.0) / 2.0
        raise ValueError("sigmoid_squared labels must lie in {0, 1} or {-1, +1}")
    return y.copy()


def loss_values(loss, t, y):
    """Elementwise ``phi(t; y)``."""
    if loss == "logistic":
        return np.logaddexp(0.0, -y * t)
    if loss == "squared":
        return 0.5 * np.square(t - y)
    if loss == "sigmoid_squared":
        return np.square(expit(t) - y)
    raise ValueError("unknown loss %r" % loss)


def loss_derivs(loss, t, y):
    """Elementwise ``phi'(t; y)``."""
    if loss == "logistic":
        return -y * expit(-y * t)
    if loss == "squared":
        return t - y
    if loss == "sigmoid_squared":
        s = expit(t)
        return 2.0 * (s - y) * s * (1.0 - s)
    raise ValueError("unknown loss %r" % loss)


def power_iteration(matvec, d, tol=1e-6, max_iter=1000):
    """Largest eigenvalue of a symmetric PSD operator.

    Returns ``(upper_estimate, converged)``. The estimate is the Rayleigh
    quotient plus the residual norm, which bounds the eigenvalue the
    iteration converged to from above.
    """
    rng = np.random.default_rng(0)
    v = np.ones(d) + 0.01 * rng.standard_normal(d)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        mv = matvec(v)
        rho = float(v @ mv)
        resid = float(np.linalg.norm(mv - rho * v))
        norm = np.linalg.norm(mv)
        if norm == 0.0:
            return 0.0, True
        if resid <= tol * rho:
            return rho + resid, True
        v = mv / norm
    return rho, False


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    """Regularized empirical risk ``(1/n) sum phi(a_i^T x; y_i) + psi(x)``.

    Build instances with :func:`make_problem`, which fills in the
    smoothness constants.
    """

    data: DesignMatrix
    labels: np.ndarray
    loss: str
    lambda1: float
    lambda2: float
    gamma: float
    L_i: np.ndarray
    L_f: float
    mu_f: float = 0.0
    lf_converged: bool = True

    @property
    def n(self):
        return self.data.n

    @property
    def d(self):
        return self.data.d

    @property
    def mu_psi(self):
        return self.lambda2

    @property
    def mu(self):
        return self.mu_f + self.mu_psi

    @property
    def L_bar(self):
        return float(np.mean(self.L_i))

    @property
    def L_max(self):
        return float(np.max(self.L_i))

    # -- smooth part -------------------------------------------------------

    def margins(self, x):
        return self.data.matvec(x)

    def derivs(self, x):
        """Scalar derivatives ``phi_i'(a_i^T x)`` for all i."""
        return loss_derivs(self.loss, self.margins(x), self.labels)

    def component_values(self, x):
        return loss_values(self.loss, self.margins(x), self.labels)

    def f(self, x):
        return float(np.mean(self.component_values(x)))

    def component_gradient(self, i, x):
        """Gradient of ``f_i`` at ``x`` as ``(indices, values)``."""
        x = self._check_x(x)
        cols, vals = self.data.row(i)
        t = float(vals @ x[cols])
        g = float(loss_derivs(self.loss, np.array([t]), self.labels[i:i + 1])[0])
        return cols, g * vals

    def component_gradient_dense(self, i, x):
        cols, vals = self.component_gradient(i, x)
        out = np.zeros(self.d)
        out[cols] = vals
        return out

    def full_gradient(self, x):
        x = self._check_x(x)
        return self.data.rmatvec(self.derivs(x)) / self.n

    # -- regularizer -------------------------------------------------------

    def psi(self, x):
        return 0.5 * self.lambda2 * float(x @ x) + self.lambda1 * float(np.abs(x).sum())

    def P(self, x):
        return self.f(x) + self.psi(x)

    def prox(self, eta, v):
        return prox_elastic_net(v, eta, self.lambda1, self.lambda2)

    def grad_map_norm(self, x, step=None):
        """Norm of the gradient mapping ``(x - prox(x - s grad f(x))) / s``."""
        s = 1.0 / self.L_f if step is None else step
        return float(np.linalg.norm(x - self.prox(s, x - s * self.full_gradient(x))) / s)

    # -- reference snapshots ----------------------------------------------

    def grad_table(self, w):
        return GradTable.build(self, w)

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError("expected a vector of length %d, got shape %s" % (self.d, x.shape))
        return x


def prox_elastic_net(v, eta, lambda1, lambda2):
    """Soft-threshold by ``eta*lambda1`` then shrink by ``1 + eta*lambda2``."""
    if eta <= 0:
        raise ValueError("prox step must be positive, got %r" % eta)
    v = np.asarray(v, dtype=np.float64)
    if lambda1 == 0.0:
        return v / (1.0 + eta * lambda2)
    return np.sign(v) * np.maximum(np.abs(v) - eta * lambda1, 0.0) / (1.0 + eta * lambda2)


def prox_scalar(v, eta, lambda1, lambda2):
    """Scalar version of :func:`prox_elastic_net` (no numpy overhead)."""
    a = abs(v) - eta * lambda1
    if a <= 0.0:
        return 0.0
    return (a if v > 0 else -a) / (1.0 + eta * lambda2)


@dataclass
class GradTable:
    """Jacobian snapshot at a reference point ``w``.

    Since ``grad f_i(w) = phi_i'(a_i^T w) a_i`` only the scalars are kept,
    together with the dense average ``(1/n) G(w) e``.
    """

    point: np.ndarray
    derivs: np.ndarray
    aggregate: np.ndarray

    @classmethod
    def build(cls, problem, w):
        w = np.array(w, dtype=np.float64)
        derivs = problem.derivs(w)
        aggregate = problem.data.rmatvec(derivs) / problem.n
        return cls(point=w, derivs=derivs, aggregate=aggregate)

    def check(self, problem, rtol=1e-12):
        """Recompute the aggregate from scratch and compare."""
        fresh = np.zeros(problem.d)
        for i in range(problem.n):
            cols, vals = problem.data.row(i)
            fresh[cols] += self.derivs[i] * vals
        fresh /= problem.n
        scale = max(np.linalg.norm(fresh), 1e-300)
        return np.linalg.norm(fresh - self.aggregate) <= rtol * scale + 1e-300


def estimate_constants(data, loss, tol=1e-6, max_iter=1000):
    """Per-component and global smoothness constants.

    ``L_i = ||a_i||^2 / gamma`` and ``L_f = lambda_max(A^T A) / (gamma n)``
    from power iteration, capped at ``mean(L_i)``, which is always valid.

    Returns ``(L_i, L_f, converged)``.
    """
    gamma = _GAMMA[loss]
    L_i = data.row_norms_sq / gamma
    L_bar = float(np.mean(L_i))
    if data.nnz == 0:
        return L_i, 0.0, True
    csr = data.tocsr()
    lam, converged = power_iteration(lambda v: csr.T @ (csr @ v), data.d, tol=tol, max_iter=max_iter)
    if not converged:
        return L_i, L_bar, False
    return L_i, min(lam / (gamma * data.n), L_bar), True


def make_problem(data, labels, loss="logistic", lambda1=0.0, lambda2=0.0, tol=1e-6):
    """Assemble a :class:`CompositeProblem` and its smoothness constants."""
    if loss not in LOSSES:
        raise ValueError("unknown loss %r; expected one of %s" % (loss, LOSSES))
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("regularization weights must be nonnegative")
    if not isinstance(data, DesignMatrix):
        data = DesignMatrix.from_scipy(data) if sparse.issparse(data) else DesignMatrix.from_dense(data)
    y = _coerce_labels(loss, labels)
    if len(y) != data.n:
        raise ValueError("got %d labels for %d rows" % (len(y), data.n))
    y.setflags(write=False)
    L_i, L_f, ok = estimate_constants(data, loss, tol=tol)
    L_i.setflags(write=False)
    return CompositeProblem(
        data=data, labels=y, loss=loss, lambda1=float(lambda1), lambda2=float(lambda2),
        gamma=_GAMMA[loss], L_i=L_i, L_f=float(L_f), lf_converged=ok,
    )
