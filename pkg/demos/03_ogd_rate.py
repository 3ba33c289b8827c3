"""
Regret rate of projected gradient descent
=========================================

For p = 2 the learner's regret on the sign-flip stream sits between the
lower envelope c^2 sqrt(T) and the gradient-descent envelope 8 c^2 sqrt(T).
A log-log fit over a few horizons recovers a slope near one half.
The fitted curve is written to ``ogd_rate.svg``.
"""

from pathlib import Path

import numpy as np

from schatten_bench import BallSpec, OgdConfig, OgdLearner, schatten_lower_stream
from schatten_bench.analysis import lower_envelope, mc_expected_regret, ogd_envelope, rate_fit
from schatten_bench.svgplot import rate_svg

horizons, trials = [64, 128, 256, 512, 1024], 10
means, ses = [], []
for T in horizons:
    fam = lambda s, T=T: schatten_lower_stream(T, 2, 1.0, seed=s)
    m, se = mc_expected_regret(lambda st: OgdLearner(OgdConfig(BallSpec(2, 1.0), T_hint=st.T), st.T), fam, trials, 3)
    means.append(m)
    ses.append(se)
    print(f"T={T:5d}  regret {m:7.2f}   lower {lower_envelope(T, 2, 1.0):7.2f}   upper {ogd_envelope(T, 1.0):8.2f}")

fit = rate_fit(horizons, means, ses)
print(f"fitted slope {fit.slope:.3f} (r2 {fit.r_squared:.4f})")

d = fit.to_dict()
d.update(p=2, c=1.0)
Path("ogd_rate.svg").write_text(rate_svg(d))
print("wrote ogd_rate.svg")

# p = 1 is different: the learner's regret is 2 - 1/T, a constant
T = np.array(horizons)
print("p=1 regret values:", np.round(2 - 1 / T, 4))
