"""
A class that is easy online but not bounded in any Schatten norm
================================================================

The operators f_k map every basis vector e_t with bit t of k set onto e_k.
Instances live in the l1 unit ball. A weighted-majority learner over
``4 T^2`` "switch" experts keeps regret below 2 + 8 sqrt(T ln 2T),
even though the Rademacher witness for the class grows linearly in T.
"""

import numpy as np

from schatten_bench import ExpertsConfig, ExpertsLearner, binary_index_operator, separation_stream
from schatten_bench.analysis import experts_envelope, rad_separation_witness, run_regret

f5 = binary_index_operator(5, 8)
print("f_5 e_1 =", f5 @ np.eye(8)[0], "  f_5 e_2 =", f5 @ np.eye(8)[1])

for T in (64, 256):
    worst = 0.0
    for seed in range(10):
        stream = separation_stream(T, T, k_star=int(np.random.default_rng(seed).integers(1, T + 1)), seed=seed,
                                   instance_mode="dense")
        rep = run_regret(ExpertsLearner(ExpertsConfig(T, T)), stream)
        worst = max(worst, rep.regret)
    print(f"T={T}: worst regret over 10 streams {worst:.3f}, envelope {experts_envelope(T):.1f}")

# %%
# The witness: for each sign path pick k whose bits mark the +1 rounds.
for T in (8, 64, 512):
    res = rad_separation_witness(T, trials=200, seed=0)
    print(f"T={T:4d}  MC mean {res.mc_mean:7.2f} +- {res.stderr:.2f}   exact T/2 = {res.exact:g}")
