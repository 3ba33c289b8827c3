"""
Statistical learning with operator classes
==========================================

Two finite populations force any learner from n samples to pay excess
risk of order n^(-1/(p-1)) or n^(-2/p). Both ERM and averaged online
iterates stay above (c^2/12) times those rates. The last part checks
that a kernel integral operator's Hilbert-Schmidt norm equals the L2
norm of its kernel on the grid.
"""

from schatten_bench.analysis import batch_lower_bound_check, erm_rule, online_to_batch_rule
from schatten_bench.streams import KernelSpec, kernel_l2_norm, kernel_operator
from schatten_bench import schatten_norm

for construction in ("b1", "b2"):
    for name, rule in (("erm", erm_rule()), ("online-to-batch", online_to_batch_rule())):
        chk = batch_lower_bound_check(rule, p=2, c=1.0, n=8, trials=20, seed=0, construction=construction)
        print(f"{construction} {name:16s} excess {chk.mean_excess:.4f} +- {chk.stderr:.4f}  bound {chk.bound:.4f}")

# %%
for d in (16, 64, 256):
    spec = KernelSpec("gaussian", d, {"bandwidth": 0.1})
    print(f"d={d:3d}  ||f_K||_2 = {schatten_norm(kernel_operator(spec), 2):.6f}   ||K||_L2 = {kernel_l2_norm(spec):.6f}")
