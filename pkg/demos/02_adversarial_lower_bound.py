"""
The sign-flip adversary
=======================

Rounds are (e_t, c sigma_t e_t) with fair random signs. Each round's
target is independent of everything before it, so no learner can beat
the zero prediction in expectation. The best operator in the ball knows
the signs, and the gap grows like T^(1 - 1/p).
"""

import numpy as np

from schatten_bench import BallSpec, OgdConfig, OgdLearner, ZeroLearner, schatten_lower_stream
from schatten_bench.analysis import mc_expected_regret

T, c, trials = 256, 1.0, 50

for p in (2, 4, np.inf):
    family = lambda s, p=p: schatten_lower_stream(T, p, c, seed=s)
    target = T ** (1 - (0 if np.isinf(p) else 1 / p))
    zero_mean, _ = mc_expected_regret(lambda s: ZeroLearner(T), family, trials, seed=1)
    ogd = lambda s, p=p: OgdLearner(OgdConfig(BallSpec(p, c), T_hint=T), T)
    ogd_mean, ogd_se = mc_expected_regret(ogd, family, trials, seed=1)
    print(f"p={p:<4} T^(1-1/p)={target:7.1f}   zero learner {zero_mean:7.1f}   OGD {ogd_mean:7.1f} +- {ogd_se:.2f}")

# %%
# The comparator loss has a closed form, c^2 T (1 - T^(-1/p))^2
s = schatten_lower_stream(16, 2, 1.0, seed=0)
print("closed-form comparator loss at T=16, p=2:", s.comparator_loss)
