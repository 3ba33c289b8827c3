"""
Operators, singular values and Schatten balls
=============================================

A tour of the linear-algebra layer: rank-one tensors, the Jacobi SVD,
Schatten norms for a few p, and Euclidean projection onto a Schatten ball.
"""

import numpy as np

from schatten_bench import BallSpec, basis, project_schatten_ball, schatten_norm, singular_values, svd, tensor

# a rank-one operator w (x) v sends v to |v|^2 w and kills everything orthogonal to v
w, v = np.array([1.0, 2.0, 2.0]), np.array([0.0, 3.0, 4.0, 0.0])
f = tensor(w, v)
print("rank-one singular values:", singular_values(f))

# the SVD is a one-sided Jacobi sweep; factors are orthonormal and reconstruct f
rng = np.random.default_rng(0)
a = rng.normal(size=(6, 4))
U, S, V = svd(a)
print("reconstruction error:", np.abs((U * S) @ V.T - a).max())
print("orthogonality error :", np.abs(U.T @ U - np.eye(4)).max())

# %%
# Schatten norms shrink as p grows: nuclear >= Frobenius >= operator
for p in (1, 1.5, 2, 3, np.inf):
    print(f"p={p:<4} ||a||_p = {schatten_norm(a, p):.4f}")

# %%
# Projection acts on the singular values only.
# Projecting twice changes nothing, and the result sits on the boundary.
ball = BallSpec(1, 1.0)
P = project_schatten_ball(a, ball)
print("projected nuclear norm:", schatten_norm(P, 1))
print("idempotent:", np.allclose(project_schatten_ball(P, ball), P))
print("singular values before/after:", np.round(S, 3), np.round(singular_values(P), 3))

# 1-based basis helpers, as in the rest of the package
print("e_2 in R^4:", basis(2, 4))
