"""Small covariance-regime ablation: which method wins where.

Sweeps the four combinations of small/large state noise (Q) and observation
noise (R) over a handful of replicates and prints median post-intervention
RMSE per method.  Small Q means a strong, persistent trend; large R means
noisy observations — the regime where modeling the trend pays off most.
Increase ``REPLICATES`` for tighter medians.
"""

import collections

import numpy as np

from tasc import (
    DEFAULT_CV_GRID,
    EmConfig,
    Estimator,
    RscConfig,
    SimulationConfig,
    method_sweep,
)

REPLICATES = 8

scales = {"small": (0.01, 0.1), "large": (0.1, 1.0)}
regimes, names = [], []
for q_name, (a_q, b_q) in scales.items():
    for r_name, (a_r, b_r) in scales.items():
        names.append(f"Q-{q_name}/R-{r_name}")
        regimes.append(SimulationConfig(
            d_true=5, n_units=30, t_total=100, t0=40,
            a_q=a_q, b_q=b_q, a_r=a_r, b_r=b_r,
        ))

estimators = [
    Estimator(method="tasc", em=EmConfig(d=5, n_iters=60, n_restarts=2)),
    Estimator(method="sc"),
    Estimator(method="rsc", rsc=RscConfig(d=5, cv_grid=DEFAULT_CV_GRID)),
]

reports = method_sweep(regimes, estimators, replicates=REPLICATES, seed=1, regime_names=names)

table = collections.defaultdict(dict)
for name in names:
    for est in estimators:
        cells = [r.rmse_post for r in reports
                 if r.regime == name and r.method == est.name and r.error is None]
        table[name][est.name] = float(np.median(cells))

print(f"median post-intervention RMSE over {REPLICATES} replicates\n")
print(f"{'regime':16s} {'tasc':>8s} {'sc':>8s} {'rsc':>8s}   best")
for name in names:
    row = table[name]
    best = min(row, key=row.get)
    print(f"{name:16s} {row['tasc']:8.4f} {row['sc']:8.4f} {row['rsc']:8.4f}   {best}")
