"""Small model factories shared by the tests."""

import numpy as np

from periodic_empc.dynamics import LinearPeriodicSystem, augment, lift
from periodic_empc.model import BoxConstraints, StageCostSpec, build_period_model


def scalar_model(a=1.0, b=1.0, T=1, alpha=None, R=1.0, W=0.0, eps=0.0, x_box=1.0,
                 u_box=(-1.0, 1.0), d=None, bd=0.0, offset=0.0):
    d = np.zeros((T, 1)) if d is None else np.asarray(d, dtype=float).reshape(T, 1)
    sys = LinearPeriodicSystem([[a]], [[b]], [[bd]], T, d)
    lifted = lift(sys)
    alpha = np.zeros((T, 1)) if alpha is None else np.asarray(alpha, dtype=float).reshape(T, 1)
    cost = StageCostSpec(alpha, [[W]], eps, [[R]], offset)
    box = BoxConstraints([-x_box], [x_box], [u_box[0]], [u_box[1]])
    aug = augment(lifted) if W else None
    return build_period_model(lifted, cost, box, aug)


def integrator_model(eps=0.0, T=1):
    return scalar_model(eps=eps, T=T)


def random_model(rng, n=2, m=2, p=1, T=2, eps=0.0, W=0.0):
    A = rng.normal(size=(n, n))
    A *= 0.8 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    sys = LinearPeriodicSystem(A, rng.normal(size=(n, m)), 0.1 * rng.normal(size=(n, p)), T,
                               0.1 * rng.normal(size=(T, p)))
    lifted = lift(sys)
    M = rng.normal(size=(m, m))
    cost = StageCostSpec(rng.normal(size=(T, m)), W * np.eye(m), eps, 0.5 * M @ M.T)
    box = BoxConstraints(-5 * np.ones(n), 5 * np.ones(n), -np.ones(m), np.ones(m))
    return build_period_model(lifted, cost, box, augment(lifted) if W else None)
