"""Permutation stress test: time-awareness versus permutation invariance.

Shuffling pre- and post-intervention columns separately cannot change the
simplex or spectral baselines (their objectives only see column multisets),
but it destroys the temporal structure the state-space model feeds on.  The
regime below uses fewer donors than latent dimensions so the learned dynamics
carry real predictive weight.
"""

import numpy as np

from tasc import (
    EmConfig,
    Estimator,
    RscConfig,
    SimulationConfig,
    permutation_stress_test,
)

regime = SimulationConfig(
    d_true=5, n_units=5, t_total=100, t0=50,
    a_q=0.01, b_q=0.1, a_r=0.01, b_r=0.1, spectral_radius=0.95, seed=4,
)

estimators = {
    "sc": Estimator(method="sc", sc_tol=1e-10),
    "rsc": Estimator(method="rsc", rsc=RscConfig(d=4, lambda_=1.0)),
    "tasc": Estimator(method="tasc", em=EmConfig(d=5, n_iters=30, n_restarts=1, seed=0)),
}

print("post RMSE on ordered columns vs mean over 10 shuffled copies\n")
print(f"{'method':6s} {'ordered':>9s} {'shuffled':>9s} {'ratio':>7s}")
for name, est in estimators.items():
    res = permutation_stress_test(regime, est, n_shuffles=10, seed=0)
    shuffled = float(np.mean([v for v, e in zip(res.rmse_shuffled, res.errors) if e is None]))
    print(f"{name:6s} {res.rmse_ordered:9.4f} {shuffled:9.4f} {res.mean_ratio:7.3f}")

print("\nratios of 1.0 confirm permutation invariance; the time-aware model")
print("pays a real penalty when the ordering it models is destroyed.")
