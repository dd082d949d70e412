"""
Sparse robust regression through a nonlinear link
=================================================

Responses follow ``y = tanh(A u_true) + noise``. The loss
``r^2 / (1 + r^2)`` is bounded, so outliers cannot dominate it. The
auxiliary ``v = tanh(A u)`` moves the nonlinearity into the constraint.
"""

import numpy as np

import nappal as na

params = na.ErmParams(n=10, m=20, reg_lam=0.02, seed=3)
spec = na.build_erm(params)
result = na.solve(spec, na.SolverConfig(max_iters=20000))
print(result.termination, "after", result.iterations, "iterations")

# %%
# Recover the planted support. The builder keeps the generating data in the
# spec's metadata.
u = result.final.u
u_true = np.asarray(spec.meta["data"]["u_true"])
print("planted: ", np.round(u_true, 3))
print("estimate:", np.round(u, 3))
print("nonzeros:", np.flatnonzero(np.abs(u) > 1e-8))

# %%
# The iterate with the smallest step is kept by the solver,
# together with its successor, which carries the subgradient witness.
best = result.best
print("best step at k=%d, ||dw||=%.2e, witness %.2e"
      % (best.index, best.step_norm, best.xi_norm))
