"""
Stationarity on a nonconvex loss
================================

The sigmoid-squared loss is smooth but not convex. With the nonconvex step
size and p = tau/n, the smallest squared gradient norm seen in K iterations
stays below 4 (f(x0) - f*) / (eta K).
"""
import numpy as np

from loopless.harness_cli import make_synthetic
from loopless.problem_model import make_problem
from loopless.sampling import tau_nice
from loopless.smoothness import profile_for
from loopless.solvers import lsvrg_schedule, run

data, labels = make_synthetic(100, 20, 0.3, seed=3)
problem = make_problem(data, labels, "sigmoid_squared", 0.0, 0.0)
x0 = np.zeros(problem.d)
K = 10000

for tau in (1, 5, 20):
    spec = tau_nice(problem.n, tau)
    cfg = lsvrg_schedule(profile_for(problem, spec), problem, "nonconvex", tau / problem.n)
    rec = run(problem, spec, "lsvrg", cfg, max_iter=K, seed=0, record_every=1)
    g2 = np.array(rec.column("grad_map_norm")) ** 2
    f_end = problem.f(rec.final_state.x)
    # f(x_K) stands in for f*, which makes the printed bound optimistic
    bound = 4 / cfg.eta * (problem.f(x0) - f_end) / K
    print("tau=%2d  eta=%.4f  min |grad f|^2 = %.2e  (4/eta)(f0 - f_K)/K = %.2e  epochs %.0f"
          % (tau, cfg.eta, g2.min(), bound, rec.last["epoch"]))
