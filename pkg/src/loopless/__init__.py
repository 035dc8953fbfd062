"""Loopless variance-reduced optimizers (L-SVRG, L-Katyusha) under arbitrary sampling."""
from .problem_model import (CompositeProblem, DesignMatrix, GradTable, estimate_constants,
                            make_problem, prox_elastic_net)
from .sampling import (DrawnBatch, SamplerSpec, build_group_sampling, draw, enumerate_outcomes,
                       group_sampling, independent, tau_nice, verify_weight_identity,
                       with_replacement)
from .smoothness import (SmoothnessProfile, bounds_beta, bounds_eso, bounds_group,
                         bounds_tau_nice, bounds_with_replacement, importance_marginals,
                         profile_for)
from .solvers import (LKatyushaConfig, LKatyushaState, LSvrgConfig, LSvrgState, RunRecord,
                      estimator, lkatyusha_schedule, lkatyusha_step, lsvrg_schedule, lsvrg_step,
                      run)
from .lazy_engine import (delayed_update, delayed_update_katyusha_l1,
                          delayed_update_katyusha_l2only)
from .harness_cli import (ExperimentConfig, make_sampler, make_synthetic, parse_libsvm,
                          read_csv, reference_optimum, run_experiment, write_csv)

__version__ = "0.1.0"
