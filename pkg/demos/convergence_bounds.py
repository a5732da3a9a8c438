"""
The global envelope of the adaptive Newton iteration.

While k <= k0 the gradient norm drops by at least mu^2 / (2L) per step.
After k0 the bound squares gamma each step.  This script checks a run
on a quadratic against the envelope.
"""

import warnings

import numpy as np

from dsfnewton import engines, objectives

prob = objectives.synth_quadratic(1, 4, mu=1.0, M=10.0, seed=2)
k = objectives.ProblemConstants(1.0, 0.05, 10.0)
x0 = prob.x_star + 3.0
trace = engines.polyak_newton_run(prob.global_oracle(), x0, k, x_star=prob.x_star)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    b = engines.theorem2_bounds(trace.records[0].grad_norm, k.mu, k.lipschitz_hessian)
print(f"k0 = {b.k0}, gamma = {b.gamma:.4f}, estimate for 1e-10: {b.iterations_estimate(1e-10)} iterations")
print(" k    |grad|      bound     dist      bound")
for r in trace.records:
    print(f"{r.k:3d}  {r.grad_norm:9.3e}  {b.grad_bound(r.k):9.3e}  {r.dist_to_opt:9.3e}  {b.dist_bound(r.k):9.3e}")
