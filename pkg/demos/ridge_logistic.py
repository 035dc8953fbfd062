"""
Loopless variance reduction on a ridge logistic problem
=======================================================

Runs L-SVRG and L-Katyusha with serial uniform sampling and prints the
suboptimality against epochs.
"""
from loopless.harness_cli import make_synthetic, reference_optimum
from loopless.problem_model import make_problem
from loopless.sampling import tau_nice
from loopless.smoothness import profile_for
from loopless.solvers import lkatyusha_schedule, lsvrg_schedule, run

# a small dense instance with unit-norm rows
data, labels = make_synthetic(200, 50, 0.3, seed=1, normalize=True)
problem = make_problem(data, labels, "logistic", lambda1=0.0, lambda2=1e-2)
ref = reference_optimum(problem)
print("P* = %.12f (converged: %s)" % (ref.value, ref.converged))

spec = tau_nice(problem.n, 1)
profile = profile_for(problem, spec)
print("L1 = %.4f  L2 = %.4f  L_f = %.4f  mu = %.4f" % (profile.L1, profile.L2, problem.L_f, problem.mu))

configs = {
    "lsvrg": lsvrg_schedule(profile, problem, "strongly_convex", 1 / problem.n),
    "lkatyusha": lkatyusha_schedule(profile, problem, p=1 / problem.n),
}
records = {name: run(problem, spec, name, cfg, max_epochs=40, seed=0, p_star=ref.value)
           for name, cfg in configs.items()}

# print every fifth recorded row side by side
print("\n%8s  %14s  %14s" % ("epoch", "L-SVRG", "L-Katyusha"))
a, b = records["lsvrg"], records["lkatyusha"]
for ra, rb in list(zip(a.rows, b.rows))[::5]:
    print("%8.1f  %14.3e  %14.3e" % (ra[1], ra[3], rb[3]))

for name, rec in records.items():
    last = rec.last
    print("%s: suboptimality %.2e after %d iterations and %d refreshes"
          % (name, last["subopt"], last["iter"], last["refreshes"]))
