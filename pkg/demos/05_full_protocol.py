# %% [markdown]
# # The whole protocol, and a small ablation
#
# `run_experiment` builds the session plan, trains both branches and scores
# every session on all classes seen so far. The same call drives the
# `hyperfscil run` command.

# %%
import numpy as np

from hyperfscil import ExperimentConfig, run_experiment
from hyperfscil.experiment import results_csv

cfg = ExperimentConfig(seed=0)
report = run_experiment(cfg)
print(results_csv(report))
print(f"PD {report.performance_drop:.2f}   average {report.average_accuracy:.2f}")
print("routing per session:", report.routing)

# %% Pure Euclidean reciprocal points (beta = 1) against the mixed distance.
for beta in (1.0, 0.7):
    runs = [run_experiment(cfg.replace(beta=beta, seed=s)) for s in range(3)]
    print(f"beta={beta}: unknown {np.mean([r.unknown_accuracy for r in runs]):.1f}%  "
          f"known {np.mean([r.known_accuracy for r in runs]):.1f}%  "
          f"last session {np.mean([r.final_accuracy for r in runs]):.1f}%")
