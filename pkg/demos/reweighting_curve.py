#!/usr/bin/env python3
"""Where does Focal-InfoNCE start up-weighting a negative?

A negative pair with cosine similarity s enters the softmax denominator
with logit s * (s + m) / tau instead of s / tau.  This script tabulates
that re-scaled value next to the identity for a few hardness values m and
locates the crossover s = 1 - m.
"""
import numpy as np

from focal_infonce import effective_logit
from focal_infonce.cli import reweight_curve

# %% The curve for the default hardness m = 0.3
rows = reweight_curve([0.3], resolution=11)
print(f"{'s':>5} {'s(s+m)':>8} {'change':>8}")
for row in rows:
    change = row["g"] - row["s"]
    print(f"{row['s']:5.2f} {row['g']:8.4f} {change:+8.4f}")

# %% Negatives below 1 - m are damped and those above it are amplified
s = np.linspace(0.0, 1.0, 100_001)
for m in (0.0, 0.1, 0.2, 0.3, 0.4, 1.0):
    above = s[(effective_logit(s, m) > s) & (s > 0)]
    start = above.min() if above.size else float("nan")
    print(f"m = {m:.1f}: crossover at 1 - m = {1 - m:.1f}, first amplified grid point {start:.5f}")

# %% The crossover is an exact fixed point, not just an approximate one
for m in (0.1, 0.2, 0.3, 0.4):
    print(f"m = {m}: g(1 - m) - (1 - m) = {effective_logit(1 - m, m) - (1 - m)!r}")
