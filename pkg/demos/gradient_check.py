#!/usr/bin/env python3
"""Checking the analytic gradient of Focal-InfoNCE against finite differences.

Differentiating the per-sample loss through the effective logit s(s + m)
gives the factor (2s + m) on each negative.  A frequently seen closed form
instead carries 2(s + m) and a sum over the row's negatives.  Both are
compared with central finite differences here.
"""
import numpy as np

from focal_infonce import LossConfig, finite_diff_gradient, grad_check, loss_gradient
from focal_infonce.objective import random_instance, relative_error

rng = np.random.default_rng(0)
cfg = LossConfig.focal(tau=0.05, m=0.3)

# %% A small batch: 4 sentences, two dropout views each
sim = random_instance(rng, 4, 16)
np.set_printoptions(precision=4, suppress=True)
print("similarity matrix (diagonal = positives)\n", sim)

exact = loss_gradient(sim, cfg)
printed = loss_gradient(sim, cfg, form="printed")
numeric = finite_diff_gradient(sim, cfg, h=1e-6)
print("\nexact gradient\n", exact)
print("finite differences\n", numeric)
print("alternative closed form\n", printed)

# %% Relative errors
print(f"\nexact vs finite differences: max rel err {relative_error(exact, numeric).max():.2e}")
print(f"alternative form vs finite differences: max rel err {relative_error(printed, numeric).max():.2e}")

# %% The same check over many random instances, as the gradcheck command runs it
worst = max(grad_check(random_instance(rng, int(rng.integers(2, 65)), 32), cfg).max_rel_err for _ in range(200))
print(f"worst max rel err over 200 instances: {worst:.2e} (tolerance 1e-5)")
