"""
A convex sanity check
=====================

Set ``c = s = 0``, remove the penalties and boxes, and the sharing
instance reduces to a linearly constrained convex QP. Its KKT system can be
solved directly, so it tells us where the iterates should end up.
"""

import numpy as np

import nappal as na

spec = na.build_sharing(na.convex_qp_params(seed=0))
u_star, v_star, p_star = na.sharing_kkt_solution(spec)

result = na.solve(spec, na.SolverConfig(max_iters=100_000))
print(result.termination, "after", result.iterations, "iterations")
print("max |u - u*| =", np.max(np.abs(result.final.u - u_star)))
print("max |v - v*| =", np.max(np.abs(result.final.v - v_star)))

# %%
# On this instance the potential gap shrinks geometrically. The estimator
# fits ``log(Lambda^k - Lambda*)`` on the middle of the run, using the final
# value as a stand-in for ``Lambda*``.
rate = result.rate
print("per-iteration factor %.6f, R^2 = %.5f" % (rate.alpha, rate.r_squared))
