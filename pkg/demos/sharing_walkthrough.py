"""
Sharing a resource across agents
================================

Four agents each hold three private decisions. Their nonlinear footprints
add up to a shared vector ``v`` that enters a smooth (slightly nonconvex)
cost. Every agent also pays an MCP sparsity penalty and lives in a box.
"""

import numpy as np

import nappal as na
from nappal import diagnostics as dg

# %%
# Build the instance. Every Lipschitz modulus is derived from the generated
# data, so it can be checked before anything runs.
spec = na.build_sharing(na.SharingParams(N=4, block_dims=3, m=5, c=0.5, seed=1))
print(na.validate_problem(spec))
print(dg.check_descent_inequalities(spec, sample_count=500))

# %%
# The penalty has to beat a floor set by lambda_min(B^T B) and the gradient
# moduli. ``gamma=None`` picks 1.05 times that floor.
print("gamma floor:", na.default_gamma(spec, 1.0))

result = na.solve(spec, na.SolverConfig(max_iters=20000))
print(result.termination, "after", result.iterations, "iterations")

# %%
# The potential never goes up. Each step drops it by at least
# ``c3 * ||w^k - w^{k+1}||^2``.
lam = result.trace["Lambda"]
print("Lambda: start %.6f  end %.6f  largest increase %.2e"
      % (lam[0], lam[-1], np.max(np.diff(lam[1:]))))
print("invariant violations:", result.violations)

# %%
# The certificate ``h * ||w^k - w^{k+1}||`` bounds the norm of an explicit
# subgradient of the augmented Lagrangian. Here is how loose it is at the end.
last = result.trace[-1]
print("xi = %.3e  <=  bound = %.3e" % (last.xi_norm, last.cert_bound))

# %%
# Per-agent decisions. MCP zeroes out some coordinates and the box clips
# others.
for i, sl in enumerate(spec.block_slices):
    print(f"agent {i}:", np.round(result.final.u[sl], 4))
