"""Singular values, Schatten norms and Schatten-ball projections.

The SVD is a one-sided (Hestenes) Jacobi iteration with a fixed
round-robin pair ordering, so factors are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .hilbert import as_operator

SWEEP_TOL = 1e-12
MAX_SWEEPS = 80
RANK_RTOL = 1e-12
NEGLIGIBLE = 1e-15


class SvdFactors(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def parse_p(p) -> float:
    """Accept ``inf``/``"inf"``/numbers; reject ``p < 1``."""
    if isinstance(p, str):
        p = math.inf if p.strip().lower() in {"inf", "infinity", "oo"} else float(p)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"Schatten index must satisfy p >= 1, got {p}")
    return p


@dataclass(frozen=True)
class BallSpec:
    """The Schatten ball ``{f : ||f||_p <= c}``."""

    p: float
    c: float

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"ball radius must be positive and finite, got {self.c}")

    def contains(self, f, rtol: float = 1e-9) -> bool:
        return schatten_norm(f, self.p) <= self.c * (1 + rtol)


def _round_robin_layout(n: int) -> np.ndarray:
    """Column permutation advancing the circle-method schedule by one round.

    Columns are kept so that slot ``j`` of the left half is paired with slot
    ``j`` of the right half; every pair meets exactly once per sweep.
    """
    h = n // 2
    players = np.concatenate([np.arange(h), np.arange(n - 1, h - 1, -1)])
    nxt = np.concatenate([[players[0], players[-1]], players[1:-1]])
    return np.concatenate([nxt[:h], nxt[h:][::-1]])


def _is_monomial(a: np.ndarray) -> bool:
    nz = a != 0
    return bool(nz.sum(axis=0).max(initial=0) <= 1 and nz.sum(axis=1).max(initial=0) <= 1)


def _complete_columns(U: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``U`` not in ``keep`` by an orthonormal completion."""
    m = U.shape[0]
    K = U[:, keep]
    missing = np.flatnonzero(~keep)
    # range of the complementary projector, picked out by pivoted QR
    P = np.eye(m) - K @ K.T
    Q, _, _ = scipy.linalg.qr(P, pivoting=True)
    Z = Q[:, : missing.size]
    Z -= K @ (K.T @ Z)
    Z, _ = np.linalg.qr(Z)
    out = U.copy()
    out[:, missing] = Z
    return out


def _svd_monomial(a: np.ndarray) -> SvdFactors:
    # at most one nonzero per row and column: columns are already orthogonal,
    # so a Jacobi sweep would apply no rotation
    m, n = a.shape
    col_norm = np.abs(a).sum(axis=0)
    order = np.argsort(-col_norm, kind="stable")
    S = col_norm[order]
    V = np.eye(n)[:, order]
    U = np.zeros((m, n))
    keep = S > 0
    used = np.zeros(m, dtype=bool)
    for j in np.flatnonzero(keep):
        col = a[:, order[j]]
        i = np.flatnonzero(col)[0]
        U[i, j] = math.copysign(1.0, col[i])
        used[i] = True
    # zero singular values: complete with the unused basis vectors, in order
    free = np.flatnonzero(~used)
    for j, i in zip(np.flatnonzero(~keep), free):
        U[i, j] = 1.0
    return SvdFactors(U, S, V)


def _svd_jacobi_tall(a: np.ndarray) -> SvdFactors:
    m, n = a.shape
    # work at unit scale so products of column norms neither overflow nor underflow
    amax = float(np.abs(a).max())
    if amax == 0:
        return _svd_monomial(a)
    a = a / amax
    n_even = n + (n % 2)
    h = n_even // 2
    W = np.zeros((m, n_even))
    W[:, :n] = a
    V = np.eye(n_even)
    layout = _round_robin_layout(n_even)
    # columns below this squared norm are roundoff; rotating them never settles
    floor = (NEGLIGIBLE * float(np.linalg.norm(a))) ** 2
    for _ in range(MAX_SWEEPS):
        worst = 0.0
        for _ in range(n_even - 1):
            L, R = W[:, :h], W[:, h:]
            alpha = np.einsum("ij,ij->j", L, L)
            beta = np.einsum("ij,ij->j", R, R)
            gamma = np.einsum("ij,ij->j", L, R)
            scale = np.sqrt(alpha * beta)
            live = (alpha > floor) & (beta > floor)
            off = np.divide(np.abs(gamma), scale, out=np.zeros_like(gamma), where=live)
            top = float(off.max())
            if top > SWEEP_TOL:
                worst = max(worst, top)
                g = np.where(off > SWEEP_TOL, gamma, 0.0)
                active = g != 0
                zeta = np.divide(beta - alpha, 2.0 * g, out=np.zeros_like(g), where=active)
                t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
                t[active & (zeta == 0)] = 1.0
                t[~active] = 0.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                Ln = c * L - s * R
                R[:] = s * L + c * R
                L[:] = Ln
                VL, VR = V[:, :h], V[:, h:]
                Vn = c * VL - s * VR
                VR[:] = s * VL + c * VR
                VL[:] = Vn
            W = W[:, layout]
            V = V[:, layout]
        if worst <= SWEEP_TOL:
            break
    else:
        raise RuntimeError("Jacobi SVD did not converge")
    # the zero padding column is never rotated, so it is still basis vector n
    real = np.arange(n_even)
    if n_even != n:
        real = np.delete(real, int(np.argmax(V[n, :])))
    W, V = W[:, real], V[:n, real]
    S = np.linalg.norm(W, axis=0)
    order = np.argsort(-S, kind="stable")
    S, W, V = S[order], W[:, order], V[:, order]
    keep = S > RANK_RTOL * S[0] if n and S[0] > 0 else np.zeros(n, dtype=bool)
    U = np.zeros((m, n))
    U[:, keep] = W[:, keep] / S[keep]
    if not keep.all():
        U = _complete_columns(U, keep)
    return SvdFactors(U, S * amax, V)


def svd(f, method: str = "jacobi") -> SvdFactors:
    """Thin SVD ``f = U diag(S) V^T`` with ``r = min(d_in, d_out)`` factors.

    Parameters
    ----------
    f : array_like, shape (d_out, d_in)
    method : {"jacobi", "lapack"}
        ``"lapack"`` defers to :func:`numpy.linalg.svd`; it satisfies the
        same contract but is not bit-reproducible across BLAS builds.
    """
    a = as_operator(f)
    if not np.all(np.isfinite(a)):
        raise ValueError("SVD input has non-finite entries")
    if method == "lapack":
        U, S, Vt = np.linalg.svd(a, full_matrices=False)
        return SvdFactors(U, S, Vt.T)
    if method != "jacobi":
        raise ValueError(f"unknown SVD method {method!r}")
    m, n = a.shape
    if m < n:
        U, S, V = svd(a.T)
        return SvdFactors(V, S, U)
    if _is_monomial(a):
        return _svd_monomial(a)
    return _svd_jacobi_tall(a)


def singular_values(f, method: str = "jacobi") -> np.ndarray:
    return svd(f, method=method).S


def numerical_rank(f, rtol: float = RANK_RTOL) -> int:
    S = singular_values(f)
    if S.size == 0 or S[0] == 0:
        return 0
    return int(np.count_nonzero(S > rtol * S[0]))


def lp_norm(s, p) -> float:
    s = np.abs(np.asarray(s, dtype=float))
    p = parse_p(p)
    if s.size == 0:
        return 0.0
    if math.isinf(p):
        return float(s.max())
    top = s.max()
    if top == 0:
        return 0.0
    # rescale to dodge overflow/underflow for large p
    return float(top * np.sum((s / top) ** p) ** (1.0 / p))


def schatten_norm(f, p, method: str = "jacobi") -> float:
    """``(sum_n s_n^p)^(1/p)``, or the largest singular value for ``p = inf``."""
    p = parse_p(p)
    return lp_norm(singular_values(f, method=method), p)


def operator_norm(f) -> float:
    return schatten_norm(f, math.inf)


def abs_power_trace(f, p) -> float:
    """``tr(|f|^p) = sum_n s_n^p`` for finite ``p >= 1``."""
    p = parse_p(p)
    if math.isinf(p):
        raise ValueError("tr(|f|^p) is undefined for p = inf")
    return float(np.sum(singular_values(f) ** p))


def _solve_coordinate(v: np.ndarray, lam: float, p: float) -> np.ndarray:
    """Solve ``x + lam * p * x^(p-1) = v`` for ``x in [0, v]`` coordinatewise.

    Newton safeguarded by bisection; the left side is increasing in ``x``.
    """
    lo = np.zeros_like(v)
    hi = v.copy()
    x = v.copy() if p >= 2 else 0.5 * v
    k = lam * p
    for _ in range(200):
        g = x + k * x ** (p - 1) - v
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            dg = 1.0 + k * (p - 1) * x ** (p - 2)
            step = x - g / dg
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        if np.all(np.abs(new - x) <= 1e-15 * np.maximum(v, 1e-300)):
            x = new
            break
        x = new
    return x


def project_lp_ball(s, p, c) -> np.ndarray:
    """Euclidean projection of ``s >= 0`` onto ``{x >= 0 : ||x||_p <= c}``."""
    s = np.asarray(s, dtype=float)
    p = parse_p(p)
    if not c > 0:
        raise ValueError(f"radius must be positive, got {c}")
    if np.any(s < 0):
        raise ValueError("project_lp_ball expects a nonnegative sequence")
    if lp_norm(s, p) <= c:
        return s.copy()
    if math.isinf(p):
        return np.minimum(s, c)
    if p == 2:
        return s * (c / lp_norm(s, 2))
    if p == 1:
        # soft threshold at the level where the mass equals c
        u = np.sort(s)[::-1]
        css = np.cumsum(u)
        k = np.arange(1, u.size + 1)
        rho = np.flatnonzero(u - (css - c) / k > 0)[-1]
        theta = (css[rho] - c) / (rho + 1)
        return np.maximum(s - theta, 0.0)

    # general p: outer bisection on the multiplier of the KKT system
    lam_lo, lam_hi = 0.0, 1.0
    while lp_norm(_solve_coordinate(s, lam_hi, p), p) > c:
        lam_lo, lam_hi = lam_hi, 2.0 * lam_hi
    x = _solve_coordinate(s, lam_hi, p)
    for _ in range(400):
        if abs(lp_norm(x, p) - c) <= 1e-9 * c:
            break
        mid = 0.5 * (lam_lo + lam_hi)
        if mid in (lam_lo, lam_hi):
            break
        xm = _solve_coordinate(s, mid, p)
        if lp_norm(xm, p) > c:
            lam_lo = mid
        else:
            lam_hi, x = mid, xm
    return x


def project_schatten_ball(f, ball: BallSpec) -> np.ndarray:
    """Frobenius-nearest operator with ``||.||_p <= c``.

    Works on singular values; for ``p = 2`` this is a plain radial rescale
    and no decomposition is needed.
    """
    a = as_operator(f)
    if ball.p == 2:
        fro = float(np.linalg.norm(a))
        return a.copy() if fro <= ball.c else a * (ball.c / fro)
    U, S, V = svd(a)
    if lp_norm(S, ball.p) <= ball.c:
        return a.copy()
    return (U * project_lp_ball(S, ball.p, ball.c)) @ V.T
