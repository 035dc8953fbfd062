"""
Importance sampling with one heavy row
======================================

One data row is ten times longer than the rest. Uniform minibatches must
take a small step to cope with it; importance marginals spread the work by
smoothness and allow a much larger one.
"""
import numpy as np

from loopless.harness_cli import ExperimentConfig, load_problem, reference_optimum, run_experiment

base = ExperimentConfig(synthetic=(200, 50, 0.3), synthetic_seed=2, heavy_rows=1, normalize=True,
                        loss="logistic", lambda1=1e-4, lambda2=1e-2, tau=5, epochs=2000, target=1e-6)
problem = load_problem(base)
ref = reference_optimum(problem)
print("row smoothness: max %.2f, mean %.2f" % (problem.L_i.max(), problem.L_bar))

for sampling in ("uniform", "importance-group", "importance-replacement"):
    epochs = []
    for seed in range(5):
        cfg = ExperimentConfig(**{**base.as_dict(), "sampling": sampling, "seed": seed})
        rec = run_experiment(cfg, problem, ref)
        epochs.append(rec.last["epoch"])
    print("%-24s L1 = %7.3f  step = %.4f  median epochs to 1e-6: %.1f"
          % (sampling, rec.meta["L1"], rec.meta["schedule_eta"], np.median(epochs)))
