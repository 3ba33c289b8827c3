"""Online learners for squared-loss operator regression, plus batch solvers.

Every learner follows the same round protocol: ``predict(x)`` returns the
guess for the label of ``x`` without touching state, then
``update(x, y)`` reveals the label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .hilbert import DimensionError, RankOne, as_vector, basis
from .spectral import BallSpec, project_schatten_ball


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate: np.ndarray):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class LearnerRound:
    x: np.ndarray
    y_hat: np.ndarray
    y: np.ndarray
    loss: float

    @classmethod
    def score(cls, x, y_hat, y) -> "LearnerRound":
        r = np.asarray(y_hat) - np.asarray(y)
        return cls(x, y_hat, y, float(r @ r))


class OnlineLearner:
    """Base class; subclasses override :meth:`predict` and :meth:`update`."""

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError

    def update(self, x, y) -> None:
        raise NotImplementedError

    def operator(self) -> np.ndarray:
        """Current predictor as a matrix, for learners whose predictor is linear."""
        raise NotImplementedError(f"{type(self).__name__} has no operator form")

    def operator_view(self) -> np.ndarray:
        """Like :meth:`operator` but may return internal state; do not mutate."""
        return self.operator()

    def snapshot(self):
        return self.operator()


class ZeroLearner(OnlineLearner):
    def __init__(self, d_out: int, d_in: int | None = None):
        self.d_out = d_out
        self.d_in = d_out if d_in is None else d_in

    def predict(self, x) -> np.ndarray:
        return np.zeros(self.d_out)

    def update(self, x, y) -> None:
        pass

    def operator(self) -> np.ndarray:
        return np.zeros((self.d_out, self.d_in))


def zero_learner(d_out: int, d_in: int | None = None) -> ZeroLearner:
    return ZeroLearner(d_out, d_in)


class FixedLearner(OnlineLearner):
    """Always predicts with the same operator; never learns."""

    def __init__(self, f):
        self.f = np.array(f, dtype=float)

    def predict(self, x) -> np.ndarray:
        return self.f @ as_vector(x)

    def update(self, x, y) -> None:
        pass

    def operator(self) -> np.ndarray:
        return self.f.copy()


# -- projected online gradient descent ----------------------------------------


@dataclass(frozen=True)
class OgdConfig:
    ball: BallSpec
    eta: float | str = "auto"
    T_hint: int | None = None
    target_radius: float | None = None

    def __post_init__(self):
        if self.eta == "auto":
            if not self.T_hint or self.T_hint < 1:
                raise ValueError("eta='auto' needs a positive T_hint")
        elif not (isinstance(self.eta, (int, float)) and self.eta > 0):
            raise ValueError(f"eta must be positive or 'auto', got {self.eta!r}")

    @property
    def step_size(self) -> float:
        if self.eta != "auto":
            return float(self.eta)
        c = self.ball.c
        c_y = c if self.target_radius is None else self.target_radius
        diameter = 2.0 * c
        grad_bound = 2.0 * (c + c_y)
        return diameter / (grad_bound * math.sqrt(self.T_hint))


class OgdLearner(OnlineLearner):
    """Projected OGD over a Schatten ball, started at the zero operator.

    Updates touch only the columns on the support of ``x``, which keeps
    basis-vector streams cheap at large truncation dimension.
    """

    def __init__(self, cfg: OgdConfig, d_in: int, d_out: int | None = None):
        self.cfg = cfg
        self.eta = cfg.step_size
        self.d_in = d_in
        self.d_out = d_in if d_out is None else d_out
        self.F = np.zeros((self.d_out, self.d_in))
        self._fro2 = 0.0

    def _check(self, x) -> np.ndarray:
        x = as_vector(x)
        if x.size != self.d_in:
            raise DimensionError(f"OGD learner configured for d_in={self.d_in}, got {x.size}")
        return x

    def predict(self, x) -> np.ndarray:
        x = self._check(x)
        nz = np.flatnonzero(x)
        return self.F[:, nz] @ x[nz]

    def update(self, x, y) -> None:
        x = self._check(x)
        y = as_vector(y)
        if y.size != self.d_out:
            raise DimensionError(f"OGD learner configured for d_out={self.d_out}, got {y.size}")
        nz = np.flatnonzero(x)
        if nz.size == 0:
            return
        cols = self.F[:, nz]
        residual = cols @ x[nz] - y
        new = cols - self.eta * 2.0 * np.outer(residual, x[nz])
        self._fro2 += float(np.sum(new * new) - np.sum(cols * cols))
        self.F[:, nz] = new
        self._project()

    def _project(self) -> None:
        ball = self.cfg.ball
        c2 = ball.c * ball.c
        # ||f||_p <= ||f||_2 for p >= 2, so a Frobenius-feasible iterate needs no SVD
        if ball.p >= 2 and self._fro2 <= c2:
            return
        if ball.p == 2:
            fro2 = float(np.sum(self.F * self.F))
            if fro2 > c2:
                self.F *= ball.c / math.sqrt(fro2)
                fro2 = float(np.sum(self.F * self.F))
            self._fro2 = fro2
            return
        self.F = project_schatten_ball(self.F, ball)
        self._fro2 = float(np.sum(self.F * self.F))

    def operator(self) -> np.ndarray:
        return self.F.copy()

    def operator_view(self) -> np.ndarray:
        return self.F


def ogd_learner(cfg: OgdConfig, d_in: int, d_out: int | None = None) -> OgdLearner:
    return OgdLearner(cfg, d_in, d_out)


# -- the separation class {f_k} ------------------------------------------------


def bit(k: int, n: int) -> int:
    """``b_k[n]``: the n-th (1-based, least significant first) binary digit of k."""
    return (k >> (n - 1)) & 1


def bit_vector(k: int, d: int) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be a natural number")
    if k.bit_length() > d:
        raise DimensionError(f"k={k} has set bits beyond dimension {d}; need d >= {k.bit_length()}")
    return np.array([bit(k, n) for n in range(1, d + 1)], dtype=float)


def bit_dot(ks: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``<sum_n b_k[n] e_n, x>`` for every k in ``ks`` at once."""
    ks = np.asarray(ks, dtype=np.int64)
    out = np.zeros(ks.shape)
    top = int(ks.max(initial=0)).bit_length()
    for n in range(min(top, x.size)):
        out += ((ks >> n) & 1) * x[n]
    return out


def binary_index_operator(k: int, d: int) -> np.ndarray:
    """Dense ``f_k = e_k (x) sum_n b_k[n] e_n`` on the d-dimensional truncation."""
    if k < 0:
        raise ValueError("k must be a natural number")
    if k == 0:
        return np.zeros((d, d))
    if k > d:
        raise DimensionError(f"f_{k} needs output direction e_{k}; requires d >= {k}, got {d}")
    f = np.zeros((d, d))
    f[k - 1] = bit_vector(k, d)
    return f


def binary_index_rank_one(k: int, d_in: int, d_out: int | None = None) -> RankOne:
    """``f_k`` kept factored, for indices too large to materialize densely."""
    d_out = max(k, 1) if d_out is None else d_out
    if k == 0:
        return RankOne(np.zeros(d_out), np.zeros(d_in))
    return RankOne(basis(k, d_out), bit_vector(k, d_in))


# -- multiplicative weights over the virtual experts E_i^j -------------------


@dataclass(frozen=True)
class ExpertsConfig:
    T: int
    d: int
    eta: float | str = "auto"

    def __post_init__(self):
        if self.T < 1 or self.d < 1:
            raise ValueError("T and d must be positive")
        if self.eta != "auto" and not self.eta > 0:
            raise ValueError(f"eta must be positive or 'auto', got {self.eta!r}")

    @property
    def threshold(self) -> float:
        return 1.0 / (2.0 * math.sqrt(self.T))

    @property
    def list_length(self) -> int:
        return 4 * self.T

    @property
    def n_experts(self) -> int:
        return self.T * self.list_length

    @property
    def learning_rate(self) -> float:
        if self.eta != "auto":
            return float(self.eta)
        # Hedge rate for losses in [0, 4]
        return 0.25 * math.sqrt(8.0 * math.log(self.n_experts) / self.T)

    def overhead_bound(self) -> float:
        return 4.0 * math.sqrt(2.0 * self.T * math.log(self.n_experts))


class ExpertsLearner(OnlineLearner):
    """Multiplicative weights over experts ``E_i^j`` (i <= T, j <= 4T).

    ``E_i^j`` predicts 0 through round i and ``f_k(x_t)`` afterwards, with
    ``k = sort(S_i)[j]`` and ``S_i`` the coordinates of ``y_i`` of magnitude
    at least ``1/(2 sqrt(T))``. Experts that have not split from the zero
    prediction (``t <= i`` or a padding index ``k = 0``) share one loss, so
    they are tracked as a single weighted block; the resulting distribution
    over all ``4T^2`` experts is the same as with explicit bookkeeping.
    """

    def __init__(self, cfg: ExpertsConfig):
        self.cfg = cfg
        self.eta = cfg.learning_rate
        self.t = 0
        self.index_sets: list[np.ndarray] = []
        self.zero_count = cfg.n_experts
        self.zero_loss = 0.0
        self.act_i = np.zeros(0, dtype=np.int64)
        self.act_j = np.zeros(0, dtype=np.int64)
        self.act_k = np.zeros(0, dtype=np.int64)
        self.act_loss = np.zeros(0)

    def _check_x(self, x) -> np.ndarray:
        x = as_vector(x)
        if x.size != self.cfg.d:
            raise DimensionError(f"experts learner configured for d={self.cfg.d}, got {x.size}")
        return x

    def weights(self) -> tuple[float, np.ndarray]:
        """(total weight of the zero block, weight of each split-off expert)."""
        logw = np.concatenate(
            [
                [math.log(self.zero_count) - self.eta * self.zero_loss if self.zero_count else -np.inf],
                -self.eta * self.act_loss,
            ]
        )
        w = np.exp(logw - logsumexp(logw))
        return float(w[0]), w[1:]

    def predict(self, x) -> np.ndarray:
        x = self._check_x(x)
        _, w = self.weights()
        y_hat = np.zeros(self.cfg.d)
        if w.size:
            np.add.at(y_hat, self.act_k - 1, w * bit_dot(self.act_k, x))
        return y_hat

    def operator(self) -> np.ndarray:
        _, w = self.weights()
        d = self.cfg.d
        f = np.zeros((d, d))
        for k, wk in zip(self.act_k, w):
            f[k - 1] += wk * bit_vector(int(k), d)
        return f

    def update(self, x, y) -> None:
        x = self._check_x(x)
        y = as_vector(y)
        if self.t >= self.cfg.T:
            raise ValueError(f"experts learner horizon T={self.cfg.T} exhausted")
        y2 = float(y @ y)
        if self.act_k.size:
            a = bit_dot(self.act_k, x)
            yk = np.zeros(self.act_k.size)
            inside = self.act_k <= y.size
            yk[inside] = y[self.act_k[inside] - 1]
            self.act_loss = self.act_loss + (y2 - 2.0 * a * yk + a * a)
        self.zero_loss += y2
        self.t += 1

        S = self.index_set(y)
        if S.size and S[0] > self.cfg.d:
            raise DimensionError(
                f"index {int(S[0])} in S_{self.t} needs operator f_{int(S[0])}; "
                f"requires d >= {int(S[0])}, got {self.cfg.d}"
            )
        self.index_sets.append(S)
        if S.size:
            # E_t^j (j <= |S_t|) leaves the zero block with the block's loss so far
            self.act_i = np.concatenate([self.act_i, np.full(S.size, self.t)])
            self.act_j = np.concatenate([self.act_j, np.arange(1, S.size + 1)])
            self.act_k = np.concatenate([self.act_k, S])
            self.act_loss = np.concatenate([self.act_loss, np.full(S.size, self.zero_loss)])
            self.zero_count -= S.size

    def index_set(self, y) -> np.ndarray:
        """``S`` for one target, sorted in descending order (1-based indices)."""
        y = as_vector(y)
        S = np.flatnonzero(np.abs(y) >= self.cfg.threshold)[::-1] + 1
        if S.size > self.cfg.list_length:
            raise ValueError(
                f"|S| = {S.size} exceeds 4T = {self.cfg.list_length}; target outside the unit ball"
            )
        return S.astype(np.int64)

    def sorted_list(self, i: int) -> np.ndarray:
        """``sort(S_i)`` padded with zeros to length 4T."""
        S = self.index_sets[i - 1]
        out = np.zeros(self.cfg.list_length, dtype=np.int64)
        out[: S.size] = S
        return out

    def expert_predict(self, i: int, j: int, t: int, x) -> np.ndarray:
        """What ``E_i^j`` predicts at round ``t`` (all indices 1-based)."""
        x = self._check_x(x)
        if t <= i:
            return np.zeros(self.cfg.d)
        k = int(self.sorted_list(i)[j - 1])
        if k == 0:
            return np.zeros(self.cfg.d)
        return binary_index_rank_one(k, self.cfg.d, self.cfg.d) @ x

    def best_expert_loss(self) -> float:
        losses = list(self.act_loss)
        if self.zero_count:
            losses.append(self.zero_loss)
        return float(min(losses))

    def snapshot(self) -> dict:
        w0, w = self.weights()
        return {
            "round": self.t,
            "zero_block": {"count": self.zero_count, "weight": w0, "loss": self.zero_loss},
            "experts": [
                {"i": int(i), "j": int(j), "k": int(k), "weight": float(wk), "loss": float(lk)}
                for i, j, k, wk, lk in zip(self.act_i, self.act_j, self.act_k, w, self.act_loss)
            ],
        }


def experts_learner(cfg: ExpertsConfig) -> ExpertsLearner:
    return ExpertsLearner(cfg)


# -- batch learners -----------------------------------------------------------


def _unzip(sample) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(sample, "xs") and hasattr(sample, "ys"):
        return np.asarray(sample.xs, dtype=float), np.asarray(sample.ys, dtype=float)
    pairs = list(sample)
    if not pairs:
        return np.zeros((0, 0)), np.zeros((0, 0))
    xs = np.array([as_vector(x) for x, _ in pairs])
    ys = np.array([as_vector(y) for _, y in pairs])
    return xs, ys


def online_to_batch(learner: OnlineLearner, sample) -> np.ndarray:
    """One pass of ``learner`` over ``sample``; returns the mean post-update iterate."""
    xs, ys = _unzip(sample)
    if len(xs) == 0:
        raise ValueError("online_to_batch needs a nonempty sample")
    total = None
    for x, y in zip(xs, ys):
        learner.update(x, y)
        f = learner.operator_view()
        if total is None:
            total = f.copy()
        else:
            total += f
    return total / len(xs)


def squared_loss_total(f, xs, ys) -> float:
    r = np.asarray(xs) @ np.asarray(f).T - np.asarray(ys)
    return float(np.sum(r * r))


def _span_basis(rows: np.ndarray, dim: int) -> np.ndarray:
    # orthonormal columns whose span contains every row of `rows`
    if rows.shape[0] >= dim:
        return np.eye(dim)
    q, _ = np.linalg.qr(rows.T)
    return q


def erm_batch(
    sample,
    ball: BallSpec,
    tol: float = 1e-12,
    max_iter: int = 20000,
) -> np.ndarray:
    """Minimize ``sum_i ||f(x_i) - y_i||^2`` over the Schatten ball.

    Projected gradient with backtracking, from ``f = 0``. Iterates never leave
    ``span(y) (x) span(x)``, so the problem is solved in those coordinates
    (at most ``n x n``) and embedded back; Schatten norms are unchanged by
    the isometric embedding, so the iterates coincide with full-size PGD.
    """
    xs, ys = _unzip(sample)
    if len(xs) == 0:
        raise ValueError("erm_batch needs a nonempty sample")
    Qx = _span_basis(xs, xs.shape[1])
    Qy = _span_basis(ys, ys.shape[1])
    X = xs @ Qx
    Y = ys @ Qy

    def objective(G):
        r = X @ G.T - Y
        return float(np.sum(r * r))

    G = np.zeros((Qy.shape[1], Qx.shape[1]))
    obj = objective(G)
    step = 1.0
    for _ in range(max_iter):
        grad = 2.0 * (X @ G.T - Y).T @ X
        while True:
            cand = project_schatten_ball(G - step * grad, ball)
            diff = cand - G
            new_obj = objective(cand)
            if new_obj <= obj + float(np.sum(grad * diff)) + float(np.sum(diff * diff)) / (2 * step) + 1e-15:
                break
            step *= 0.5
            if step < 1e-20:
                raise ConvergenceError("backtracking step underflow", Qy @ G @ Qx.T)
        improvement = obj - new_obj
        G, obj = cand, new_obj
        if improvement < tol:
            return Qy @ G @ Qx.T
        step *= 2.0
    raise ConvergenceError(f"ERM did not converge in {max_iter} iterations", Qy @ G @ Qx.T)


__all__ = [
    "ConvergenceError",
    "ExpertsConfig",
    "ExpertsLearner",
    "FixedLearner",
    "LearnerRound",
    "OgdConfig",
    "OgdLearner",
    "OnlineLearner",
    "ZeroLearner",
    "binary_index_operator",
    "binary_index_rank_one",
    "bit",
    "bit_dot",
    "bit_vector",
    "erm_batch",
    "experts_learner",
    "ogd_learner",
    "online_to_batch",
    "squared_loss_total",
    "zero_learner",
]
