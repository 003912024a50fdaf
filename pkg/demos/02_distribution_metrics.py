"""
Comparing Likert distributions
==============================

The distance measures used to compare generated and human answers.
"""

import numpy as np

from surveymirror.metrics import (
    LikertDistribution,
    jensen_shannon,
    kde_curve,
    likert_histogram,
    silverman_bandwidth,
    wasserstein,
)
from surveymirror.survey import LikertScale

scale = LikertScale(1, 7)
rng = np.random.default_rng(1)

human = np.clip(np.round(rng.normal(5.2, 1.2, 500)), 1, 7).astype(int)
centered = np.clip(np.round(rng.normal(4.0, 0.4, 500)), 1, 7).astype(int)  # a respondent that hedges
close = np.clip(np.round(rng.normal(5.0, 1.1, 500)), 1, 7).astype(int)

H = likert_histogram(human, scale)
for name, answers in (("hedging", centered), ("close", close)):
    G = likert_histogram(answers, scale)
    print(f"{name:8s} JSD={jensen_shannon(H, G):.4f}  W={wasserstein(H, G):.4f}")

# Extreme cases: disjoint point masses.
d1, d7 = LikertDistribution.point_mass(1, scale), LikertDistribution.point_mass(7, scale)
print("JSD(d1, d7) =", jensen_shannon(d1, d7), " W(d1, d7) =", wasserstein(d1, d7))

# Wasserstein keeps track of how far mass moves; JSD only of overlap.
d2 = LikertDistribution.point_mass(2, scale)
print("JSD(d1, d2) =", jensen_shannon(d1, d2), " W(d1, d2) =", wasserstein(d1, d2))

# Kernel density curves like the ones written to kde/*.csv
h = silverman_bandwidth(human)
curve = kde_curve(human, h, np.linspace(0, 8, 161))
print(f"Silverman bandwidth {h:.3f}; density peaks at x = {curve[np.argmax(curve[:, 1]), 0]:.2f}")
