"""Experiment plumbing: data ingestion, reference optima, configured runs, CSV output
and the ``loopless`` command line (``run``, ``constants``, ``bench``).
"""
import argparse
import dataclasses
import io
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import sampling, smoothness, solvers
from .problem_model import LOSSES, DesignMatrix, make_problem

logger = logging.getLogger(__name__)

SAMPLINGS = ("uniform", "group", "independent", "replacement",
             "importance-group", "importance-independent", "importance-replacement")


class ExperimentError(RuntimeError):
    pass


# -- LIBSVM ------------------------------------------------------------------

def parse_libsvm(source, d=None):
    """Read LIBSVM text (``label idx:val ...`` with 1-based increasing indices).

    ``source`` is a path or an open text stream. ``d`` defaults to the largest
    index seen. Returns ``(DesignMatrix, labels)``.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r") as fh:
            return parse_libsvm(fh, d)
    labels, rows = [], []
    max_idx = 0
    for lineno, line in enumerate(source, start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            labels.append(float(parts[0]))
        except ValueError:
            raise ValueError("line %d: bad label %r" % (lineno, parts[0])) from None
        row, prev = [], 0
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ValueError("line %d: bad feature token %r" % (lineno, tok)) from None
            if idx < 1:
                raise ValueError("line %d: feature index %d must be >= 1" % (lineno, idx))
            if idx <= prev:
                raise ValueError("line %d: feature indices must be strictly increasing" % lineno)
            prev = idx
            row.append((idx - 1, val))
        max_idx = max(max_idx, prev)
        rows.append(row)
    if d is None:
        d = max_idx
    elif d < max_idx:
        raise ValueError("dimension %d is below the largest feature index %d" % (d, max_idx))
    return DesignMatrix.from_rows(rows, d), np.array(labels)


def write_libsvm(data, labels, dest):
    out = []
    for i in range(data.n):
        cols, vals = data.row(i)
        feats = " ".join("%d:%s" % (j + 1, repr(float(v))) for j, v in zip(cols, vals))
        out.append(("%s %s" % (repr(float(labels[i])), feats)).rstrip())
    with open(dest, "w") as fh:
        fh.write("\n".join(out) + "\n")


# -- synthetic data ----------------------------------------------------------

def make_synthetic(n, d, density=0.1, seed=0, heavy_rows=0, heavy_scale=10.0, normalize=False,
                   flip=0.1):
    """Sparse Gaussian features with labels from a planted hyperplane.

    With ``normalize`` every row is scaled to unit norm; the first
    ``heavy_rows`` rows are then multiplied by ``heavy_scale`` to make the
    component smoothness constants uneven. A fraction ``flip`` of the
    labels is flipped.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, d)) < density
    X = np.where(mask, rng.standard_normal((n, d)), 0.0)
    if normalize:
        norms = np.linalg.norm(X, axis=1)
        X[norms > 0] /= norms[norms > 0, None]
    X[:heavy_rows] *= heavy_scale
    w = rng.standard_normal(d)
    y = np.where(X @ w >= 0, 1.0, -1.0)
    y[rng.random(n) < flip] *= -1.0
    return DesignMatrix.from_dense(X), y


# -- reference optimum -------------------------------------------------------

class ReferenceOptimum(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool


def reference_optimum(problem, tol=1e-12, max_iter=200000, x0=None):
    """Accelerated proximal gradient with gradient-based restarts.

    Stops once the gradient-mapping norm (step ``1/L_f``) is at most
    ``tol``. If the cap is hit first the best iterate is returned with
    ``converged=False``.
    """
    L = problem.L_f if problem.L_f > 0 else 1.0
    s = 1.0 / L
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
    v, t = x.copy(), 1.0
    best, best_norm = x.copy(), math.inf
    for _ in range(max_iter):
        x_new = problem.prox(s, v - s * problem.full_gradient(v))
        gm = problem.grad_map_norm(x_new, s)
        if gm < best_norm:
            best, best_norm = x_new.copy(), gm
        if gm <= tol:
            return ReferenceOptimum(x_new, problem.P(x_new), True)
        if float((v - x_new) @ (x_new - x)) > 0:
            t, v = 1.0, x_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            v = x_new + (t - 1.0) / t_new * (x_new - x)
            t = t_new
        x = x_new
    logger.warning("reference solve stopped at gradient-mapping norm %.3g > %.3g", best_norm, tol)
    return ReferenceOptimum(best, problem.P(best), False)


# -- samplers ----------------------------------------------------------------

def make_sampler(name, L_i, tau):
    """Sampler by CLI name; importance variants use the constants ``L_i``."""
    n = len(L_i)
    if name == "uniform":
        return sampling.tau_nice(n, tau)
    if name in ("group", "independent", "replacement"):
        p, p_tilde = np.full(n, tau / n), np.full(n, 1.0 / n)
    elif name.startswith("importance-"):
        p, p_tilde = smoothness.importance_marginals(L_i, tau)
        name = name.split("-", 1)[1]
    else:
        raise ValueError("unknown sampling %r; expected one of %s" % (name, ", ".join(SAMPLINGS)))
    if name == "group":
        return sampling.build_group_sampling(p, tau)
    if name == "independent":
        return sampling.independent(p, tau)
    return sampling.with_replacement(p_tilde, tau)


# -- configured experiments --------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    data: Optional[str] = None
    synthetic: Optional[tuple] = None
    synthetic_seed: int = 0
    heavy_rows: int = 0
    normalize: bool = False
    loss: str = "logistic"
    algorithm: str = "lsvrg"
    sampling: str = "uniform"
    tau: float = 1
    p: Optional[float] = None
    lambda1: float = 1e-4
    lambda2: float = 1e-3
    regime: str = "auto"
    epochs: float = 30.0
    record_every: Optional[int] = None
    lazy: bool = False
    seed: int = 0
    ref_tol: float = 1e-12
    target: Optional[float] = None
    out: Optional[str] = None

    def __post_init__(self):
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("give exactly one of a dataset path or a synthetic spec")
        if self.synthetic is not None:
            n, d, dens = self.synthetic
            object.__setattr__(self, "synthetic", (int(n), int(d), float(dens)))
        if self.algorithm not in solvers.ALGORITHMS:
            raise ValueError("unknown algorithm %r" % self.algorithm)
        if self.sampling not in SAMPLINGS:
            raise ValueError("unknown sampling %r" % self.sampling)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError("unknown config keys: %s" % ", ".join(unknown))
        return cls(**values)

    def as_dict(self):
        return dataclasses.asdict(self)


def load_problem(config):
    if config.data is not None:
        data, labels = parse_libsvm(config.data)
    else:
        n, d, dens = config.synthetic
        data, labels = make_synthetic(n, d, dens, seed=config.synthetic_seed,
                                      heavy_rows=config.heavy_rows, normalize=config.normalize)
    return make_problem(data, labels, config.loss, config.lambda1, config.lambda2)


def build_schedule(config, problem, spec, profile):
    p = config.p if config.p is not None else solvers.default_p(spec)
    if config.algorithm == "lkatyusha":
        return solvers.lkatyusha_schedule(profile, problem, p)
    regime = config.regime
    if regime == "auto":
        if problem.loss == "sigmoid_squared":
            regime = "nonconvex"
        else:
            regime = "strongly_convex" if problem.mu > 0 else "convex"
    return solvers.lsvrg_schedule(profile, problem, regime, p)


def run_experiment(config, problem=None, reference=None):
    """Run one configured experiment; writes the CSV when ``config.out`` is set."""
    try:
        if problem is None:
            problem = load_problem(config)
        spec = make_sampler(config.sampling, problem.L_i, config.tau)
        profile = smoothness.profile_for(problem, spec)
        schedule = build_schedule(config, problem, spec, profile)
        if reference is None:
            reference = reference_optimum(problem, tol=config.ref_tol)
        record = solvers.run(problem, spec, config.algorithm, schedule, max_epochs=config.epochs,
                             seed=config.seed, record_every=config.record_every,
                             p_star=reference.value, lazy=config.lazy, target=config.target)
    except Exception as exc:
        raise ExperimentError("%s (algorithm=%s, sampling=%s, tau=%s): %s" % (
            type(exc).__name__, config.algorithm, config.sampling, config.tau, exc)) from exc
    meta = {k: v for k, v in config.as_dict().items() if k != "out"}
    meta.update(n=problem.n, d=problem.d, L_f=problem.L_f, L_bar=problem.L_bar,
                L1=profile.L1, L2=profile.L2, L3=profile.L3, p_star=reference.value,
                ref_converged=reference.converged)
    meta.update({"schedule_" + k: v for k, v in schedule.as_dict().items()})
    record.meta = meta
    if config.out:
        write_csv(record, config.out)
    return record


# -- CSV ---------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def format_csv(record):
    buf = io.StringIO()
    for k, v in record.meta.items():
        buf.write("# %s=%s\n" % (k, _fmt(v)))
    buf.write(",".join(solvers.COLUMNS) + "\n")
    for row in record.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(record, path):
    with open(path, "w") as fh:
        fh.write(format_csv(record))


def read_csv(path):
    """Parse a CSV written by :func:`write_csv`; metadata values stay strings."""
    meta, rows = {}, []
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = None
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif header is None:
            header = tuple(line.split(","))
            if header != solvers.COLUMNS:
                raise ValueError("unexpected CSV header %r" % (line,))
        elif line:
            vals = line.split(",")
            rows.append((int(vals[0]), float(vals[1]), float(vals[2]), float(vals[3]),
                         float(vals[4]), int(vals[5])))
    return solvers.RunRecord(rows=rows, meta=meta)


# -- command line ------------------------------------------------------------


def _synthetic(text):
    try:
        n, d, dens = text.split(",")
        return int(n), int(d), float(dens)
    except ValueError:
        raise argparse.ArgumentTypeError("expected n,d,density, got %r" % text) from None


def _tau_list(text):
    try:
        return [float(t) if "." in t else int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list, got %r" % text) from None


def _tau(text):
    v = float(text)
    return int(v) if v == int(v) else v


def _add_data_args(p):
    p.add_argument("--data", help="LIBSVM file")
    p.add_argument("--synthetic", type=_synthetic, metavar="N,D,DENSITY")
    p.add_argument("--synthetic-seed", type=int, default=0)
    p.add_argument("--heavy-rows", type=int, default=0,
                   help="scale this many rows by 10 (synthetic data only)")
    p.add_argument("--normalize", action="store_true", help="unit-norm rows (synthetic data only)")
    p.add_argument("--loss", choices=LOSSES, default="logistic")
    p.add_argument("--lambda1", type=float, default=1e-4)
    p.add_argument("--lambda2", type=float, default=1e-3)
    p.add_argument("--sampling", choices=SAMPLINGS, default="uniform")


def _add_run_args(p):
    p.add_argument("--algo", choices=solvers.ALGORITHMS, default="lsvrg")
    p.add_argument("--p", type=float, default=None, help="refresh probability (default tau/n)")
    p.add_argument("--epochs", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lazy", action="store_true")
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--regime", choices=("auto", "strongly_convex", "convex", "nonconvex"),
                   default="auto")


def build_parser():
    parser = argparse.ArgumentParser(prog="loopless",
                                     description="Loopless variance-reduced solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solver and write a metrics CSV")
    _add_data_args(run)
    _add_run_args(run)
    run.add_argument("--tau", type=_tau, default=1)
    run.add_argument("--out", help="CSV path (default: stdout)")

    const = sub.add_parser("constants", help="print the smoothness profile of a dataset")
    _add_data_args(const)
    const.add_argument("--tau", type=_tau, default=1)

    bench = sub.add_parser("bench", help="sweep tau, one CSV per value")
    _add_data_args(bench)
    _add_run_args(bench)
    bench.add_argument("--taus", type=_tau_list, default=[1, 2, 4, 8])
    bench.add_argument("--out-dir", default=".")
    return parser


def _config(args, tau, out=None):
    return ExperimentConfig(
        data=args.data, synthetic=args.synthetic, synthetic_seed=args.synthetic_seed,
        heavy_rows=args.heavy_rows, normalize=args.normalize, loss=args.loss,
        algorithm=getattr(args, "algo", "lsvrg"), sampling=args.sampling, tau=tau,
        p=getattr(args, "p", None), lambda1=args.lambda1, lambda2=args.lambda2,
        regime=getattr(args, "regime", "auto"), epochs=getattr(args, "epochs", 0.0),
        record_every=getattr(args, "record_every", None), lazy=getattr(args, "lazy", False),
        seed=getattr(args, "seed", 0), out=out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if (args.data is None) == (args.synthetic is None):
        parser.error("give exactly one of --data or --synthetic")
    try:
        if args.command == "constants":
            cfg = _config(args, args.tau)
            problem = load_problem(cfg)
            spec = make_sampler(args.sampling, problem.L_i, args.tau)
            prof = smoothness.profile_for(problem, spec)
            for key in ("L1", "L2", "L3"):
                print("%s=%.17g" % (key, getattr(prof, key)))
            print("L_f=%.17g" % problem.L_f)
            print("L_bar=%.17g" % problem.L_bar)
            print("L_max=%.17g" % problem.L_max)
            print("source=%s" % prof.source)
        elif args.command == "run":
            cfg = _config(args, args.tau, args.out)
            record = run_experiment(cfg)
            if not args.out:
                sys.stdout.write(format_csv(record))
        else:
            os.makedirs(args.out_dir, exist_ok=True)
            base = _config(args, args.taus[0])
            problem = load_problem(base)
            ref = reference_optimum(problem, tol=base.ref_tol)
            for tau in args.taus:
                out = os.path.join(args.out_dir, "%s_%s_tau%s.csv" % (args.algo, args.sampling, tau))
                run_experiment(_config(args, tau, out), problem=problem, reference=ref)
                print(out)
    except Exception as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    return 0

