"""
Lazy coordinate updates on sparse data
======================================

With sparse rows, most coordinates only see the dense parts of the
estimator and the regularizer. The lazy path fast-forwards them in closed
form when a batch touches them, and ends on the same iterate as the dense
path. The saving shows in the count of coordinate updates; wall time here
is dominated by per-coordinate Python overhead, so the dense numpy path can
still be faster at this size.
"""
import time

import numpy as np

from loopless.harness_cli import make_synthetic
from loopless.problem_model import make_problem
from loopless.sampling import tau_nice
from loopless.smoothness import profile_for
from loopless.solvers import lkatyusha_schedule, lsvrg_schedule, run

data, labels = make_synthetic(2000, 5000, 0.002, seed=4)
problem = make_problem(data, labels, "logistic", lambda1=1e-4, lambda2=1e-3)
print("n = %d, d = %d, nonzeros per row = %.1f" % (problem.n, problem.d, data.nnz / problem.n))

spec = tau_nice(problem.n, 1)
profile = profile_for(problem, spec)
for name, cfg in (("lsvrg", lsvrg_schedule(profile, problem, "strongly_convex", 1 / problem.n)),
                  ("lkatyusha", lkatyusha_schedule(profile, problem, p=1 / problem.n))):
    out = {}
    for lazy in (False, True):
        t0 = time.perf_counter()
        rec = run(problem, spec, name, cfg, max_iter=20000, seed=3, record_every=20000, lazy=lazy)
        out[lazy] = (rec.final_state.iterate(cfg), time.perf_counter() - t0, rec)
    dense, lazy = out[False][0], out[True][0]
    work = out[True][2].work
    print("%-10s relative gap %.1e  coordinate updates: dense %d, lazy %d  (%.2fs vs %.2fs)"
          % (name, np.linalg.norm(dense - lazy) / np.linalg.norm(dense), 20000 * problem.d,
             work.coord_updates + work.flush_updates, out[False][1], out[True][1]))
