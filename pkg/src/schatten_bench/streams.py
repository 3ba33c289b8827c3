"""Labeled streams and batch distributions used to probe the learners.

All adversaries here are oblivious: a stream is fully materialized from its
parameters and seed before any learner sees it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .hilbert import DimensionError, as_vector
from .learners import bit_dot, bit_vector
from .spectral import parse_p

INSTANCE_SPACES = ("l2_unit", "l1_unit")
BALL_RTOL = 1e-9


class StreamFormatError(ValueError):
    pass


class BallViolation(ValueError):
    pass


def rng_for(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def rademacher_path(T: int, seed) -> np.ndarray:
    """``T`` independent uniform signs as floats in {-1, +1}."""
    return rng_for(seed).choice(np.array([-1.0, 1.0]), size=T)


@dataclass
class Stream:
    xs: np.ndarray
    ys: np.ndarray
    instance_space: str = "l2_unit"
    target_radius: float = 1.0
    kind: str = "file"
    params: dict = field(default_factory=dict)
    sigma: np.ndarray | None = None
    # inf over the hypothesis class of the cumulative loss, when known in closed form
    comparator_loss: float | None = None
    comparator: np.ndarray | None = None

    def __post_init__(self):
        if self.instance_space not in INSTANCE_SPACES:
            raise ValueError(f"unknown instance space {self.instance_space!r}")

    def __len__(self) -> int:
        return len(self.xs)

    def __iter__(self):
        return iter(zip(self.xs, self.ys))

    def __getitem__(self, t):
        return self.xs[t], self.ys[t]

    @property
    def T(self) -> int:
        return len(self.xs)

    @property
    def d_in(self) -> int:
        return self.xs.shape[1] if self.xs.ndim == 2 else 0

    @property
    def d_out(self) -> int:
        return self.ys.shape[1] if self.ys.ndim == 2 else 0

    def validate(self) -> None:
        """Raise :class:`BallViolation` naming the first offending round."""
        order = 1 if self.instance_space == "l1_unit" else 2
        for t, (x, y) in enumerate(self, start=1):
            nx = np.linalg.norm(x, ord=order)
            if nx > 1 + BALL_RTOL:
                raise BallViolation(f"round {t}: ||x|| = {nx} outside the {self.instance_space} ball")
            ny = np.linalg.norm(y)
            if ny > self.target_radius * (1 + BALL_RTOL):
                raise BallViolation(f"round {t}: ||y|| = {ny} exceeds target radius {self.target_radius}")


@dataclass(frozen=True)
class StreamSpec:
    kind: str
    T: int = 0
    d: int | None = None
    p: float | str = 2.0
    c: float = 1.0
    seed: int = 0
    k_star: int | None = None
    instance_mode: str = "basis"
    noise: float = 0.0
    path: str | None = None

    def build(self) -> Stream:
        if self.kind == "schatten_lower":
            return schatten_lower_stream(self.T, self.p, self.c, self.seed, d=self.d)
        if self.kind == "separation_realizable":
            d = self.d or self.T
            k = self.k_star if self.k_star is not None else int(rng_for(self.seed).integers(1, d + 1))
            return separation_stream(self.T, d, k, self.seed, self.instance_mode, noise=self.noise)
        if self.kind == "rad_witness":
            return rad_witness_stream(self.T, d=self.d)
        if self.kind == "file":
            if not self.path:
                raise ValueError("file stream needs a path")
            return file_stream(self.path)
        raise ValueError(f"unknown stream kind {self.kind!r}")


# -- lower-bound adversary ----------------------------------------------------


def comparator_operator(sigma, p, c: float, d: int | None = None) -> np.ndarray:
    """``sum_t c sigma_t T^(-1/p) psi_t (x) e_t``; Schatten-p norm exactly c."""
    sigma = np.asarray(sigma, dtype=float)
    T = sigma.size
    p = parse_p(p)
    d = T if d is None else d
    if d < T:
        raise DimensionError(f"comparator for T={T} needs d >= {T}, got {d}")
    scale = c if math.isinf(p) else c / T ** (1.0 / p)
    f = np.zeros((d, d))
    idx = np.arange(T)
    f[idx, idx] = scale * sigma
    return f


def comparator_loss_closed_form(T: int, p, c: float) -> float:
    p = parse_p(p)
    if math.isinf(p):
        return 0.0
    return c * c * T * (1.0 - T ** (-1.0 / p)) ** 2


def schatten_lower_stream(T: int, p, c: float, seed, d: int | None = None) -> Stream:
    """Rounds ``(e_t, c sigma_t psi_t)`` with uniform random signs."""
    d = T if d is None else d
    if d < T:
        raise DimensionError(f"lower-bound stream of length T={T} needs d >= {T}, got {d}")
    sigma = rademacher_path(T, seed)
    xs = np.zeros((T, d))
    ys = np.zeros((T, d))
    idx = np.arange(T)
    xs[idx, idx] = 1.0
    ys[idx, idx] = c * sigma
    return Stream(
        xs,
        ys,
        instance_space="l2_unit",
        target_radius=c,
        kind="schatten_lower",
        params={"T": T, "p": parse_p(p), "c": c, "d": d},
        sigma=sigma,
        comparator_loss=comparator_loss_closed_form(T, p, c),
        comparator=comparator_operator(sigma, p, c, d),
    )


# -- separation class streams ------------------------------------------------


def separation_stream(
    T: int,
    d: int,
    k_star: int,
    seed,
    instance_mode: str = "basis",
    noise: float = 0.0,
) -> Stream:
    """Instances in the l1 unit ball labelled by ``f_{k_star}``.

    With ``noise > 0`` a Gaussian perturbation is added and the target is
    pulled back into the unit ball; the stream is then no longer realizable
    and carries no closed-form comparator.
    """
    if k_star < 0 or k_star > d:
        raise DimensionError(f"k_star={k_star} not representable at d={d}; need 0 <= k_star <= d")
    bit_vector(k_star, d)
    rng = rng_for(seed)
    if instance_mode == "basis":
        xs = np.zeros((T, d))
        xs[np.arange(T), rng.integers(0, d, size=T)] = 1.0
    elif instance_mode == "dense":
        g = rng.normal(size=(T, d))
        xs = g / np.abs(g).sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown instance_mode {instance_mode!r}")
    ys = np.zeros((T, d))
    if k_star:
        ys[:, k_star - 1] = xs @ bit_vector(k_star, d)
    if noise > 0:
        ys = ys + noise * rng.normal(size=ys.shape)
        nrm = np.linalg.norm(ys, axis=1, keepdims=True)
        ys = ys / np.maximum(nrm, 1.0)
    return Stream(
        xs,
        ys,
        instance_space="l1_unit",
        target_radius=1.0,
        kind="separation_realizable",
        params={"T": T, "d": d, "k_star": k_star, "instance_mode": instance_mode, "noise": noise},
        comparator_loss=0.0 if noise == 0 else None,
    )


def separation_losses(stream: Stream) -> np.ndarray:
    """Cumulative loss of ``f_k`` on the stream for every ``k = 0..d``.

    Operators with ``k > d`` point outside the truncated target space and
    never beat ``f_0``, so the minimum of this table is the class optimum.
    """
    d = stream.d_in
    ks = np.arange(d + 1)
    A = np.stack([bit_dot(ks, x) for x in stream.xs], axis=1)  # (d+1, T)
    y2 = np.sum(stream.ys**2, axis=1)
    Yk = np.zeros((d + 1, stream.T))
    Yk[1:] = stream.ys[:, :d].T
    return np.sum(y2[None, :] - 2 * A * Yk + np.where(ks[:, None] > 0, A * A, 0.0), axis=1)


def rad_witness_stream(T: int, d: int | None = None) -> Stream:
    """The constant tree ``x_t = e_t, y_t = 0``; identical for every sign path."""
    d = T if d is None else d
    if d < T:
        raise DimensionError(f"witness tree of depth {T} needs d >= {T}, got {d}")
    xs = np.zeros((T, d))
    xs[np.arange(T), np.arange(T)] = 1.0
    return Stream(
        xs,
        np.zeros((T, d)),
        instance_space="l1_unit",
        target_radius=1.0,
        kind="rad_witness",
        params={"T": T, "d": d},
        comparator_loss=0.0,
    )


# -- batch lower-bound distributions ------------------------------------------


@dataclass(frozen=True)
class BatchLowerBoundConfig:
    n: int
    p: float | str
    c: float = 1.0
    m: int | None = None
    construction: str = "b1"

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        if self.construction not in ("b1", "b2"):
            raise ValueError(f"unknown construction {self.construction!r}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def block(self) -> int:
        if self.m is not None:
            return self.m
        if self.construction == "b2":
            return 2
        if self.p == 1:
            raise ValueError("automatic m = ceil(2 n^(1/(p-1))) is undefined at p = 1")
        expo = 0.0 if math.isinf(self.p) else 1.0 / (self.p - 1.0)
        return math.ceil(2.0 * self.n**expo)

    @property
    def support(self) -> int:
        return self.block * self.n


@dataclass
class Population:
    """Finite uniform population; risks against it are exact averages."""

    xs: np.ndarray
    ys: np.ndarray
    optimal_risk: float
    target: np.ndarray

    def risk(self, f) -> float:
        f = np.asarray(f, dtype=float)
        nz = self.xs != 0
        if np.all(nz.sum(axis=1) == 1):
            # one-hot instances: gather columns instead of a dense product
            rows, cols = np.nonzero(nz)
            pred = (f[:, cols] * self.xs[rows, cols]).T
        else:
            pred = self.xs @ f.T
        r = pred - self.ys
        return float(np.mean(np.sum(r * r, axis=1)))


def _batch_sample(cfg: BatchLowerBoundConfig, sigma, seed, d, target_scale, optimal_risk):
    mn = cfg.support
    d = mn if d is None else d
    if d < mn:
        raise DimensionError(f"batch construction with m*n = {mn} needs d >= {mn}, got {d}")
    rng = rng_for(seed)
    sigma = rademacher_path(mn, rng) if sigma is None else np.asarray(sigma, dtype=float)
    if sigma.size != mn:
        raise ValueError(f"sigma must have length m*n = {mn}")
    idx = np.arange(mn)
    target = np.zeros((d, d))
    target[idx, idx] = target_scale * sigma
    pop_x = np.zeros((mn, d))
    pop_x[idx, idx] = 1.0
    pop_y = np.zeros((mn, d))
    pop_y[idx, idx] = target_scale * sigma
    draws = rng.integers(0, mn, size=cfg.n)
    sample = Stream(
        pop_x[draws].copy(),
        pop_y[draws].copy(),
        instance_space="l2_unit",
        target_radius=cfg.c,
        kind=f"batch_{cfg.construction}",
        params={"n": cfg.n, "p": cfg.p, "c": cfg.c, "m": cfg.block, "d": d},
        sigma=sigma,
    )
    return sample, Population(pop_x, pop_y, optimal_risk, target)


def batch_b1_sample(cfg: BatchLowerBoundConfig, sigma=None, seed=0, d: int | None = None):
    """Agnostic construction: uniform ``e_I`` labelled ``c sigma_I psi_I``.

    The population optimum over the ball is attained by the scaled sign
    operator, giving risk ``c^2 (1 - (mn)^(-1/p))^2``.
    """
    mn = cfg.support
    shrink = 1.0 if math.isinf(cfg.p) else mn ** (-1.0 / cfg.p)
    opt = cfg.c**2 * (1.0 - shrink) ** 2
    return _batch_sample(cfg, sigma, seed, d, cfg.c, opt)


def batch_b2_sample(cfg: BatchLowerBoundConfig, sigma=None, seed=0, d: int | None = None):
    """Realizable construction: labels from ``sum_i c (mn)^(-1/p) sigma_i psi_i (x) e_i``."""
    mn = cfg.support
    scale = cfg.c if math.isinf(cfg.p) else cfg.c * mn ** (-1.0 / cfg.p)
    return _batch_sample(cfg, sigma, seed, d, scale, 0.0)


# -- kernel integral operators -----------------------------------------------


def _gaussian(bandwidth: float = 0.1, scale: float = 1.0):
    return lambda r, s: scale * np.exp(-((r - s) ** 2) / (2.0 * bandwidth**2))


def _constant(value: float = 1.0):
    return lambda r, s: np.full(np.broadcast(r, s).shape, float(value))


KERNELS: dict[str, Callable] = {"gaussian": _gaussian, "constant": _constant}


@dataclass(frozen=True)
class KernelSpec:
    kernel: str | Callable
    d: int
    params: dict = field(default_factory=dict)
    c: float | None = None

    def function(self) -> Callable:
        if callable(self.kernel):
            return self.kernel
        try:
            return KERNELS[self.kernel](**self.params)
        except KeyError:
            raise ValueError(f"unknown kernel {self.kernel!r}") from None


def _kernel_grid(spec: KernelSpec) -> np.ndarray:
    if spec.d < 2:
        raise ValueError("kernel grid resolution must be at least 2")
    mid = (np.arange(spec.d) + 0.5) / spec.d
    K = np.asarray(spec.function()(mid[:, None], mid[None, :]), dtype=float)
    if not np.all(np.isfinite(K)):
        raise ValueError("kernel produced non-finite values on the grid")
    return K


def kernel_l2_norm(spec: KernelSpec) -> float:
    """Midpoint-rule L2 norm of the kernel on [0,1]^2."""
    K = _kernel_grid(spec)
    return float(np.sqrt(np.mean(K * K)))


def kernel_operator(spec: KernelSpec) -> np.ndarray:
    """Matrix of ``f_K`` in the orthonormal step-function basis of L2[0,1].

    Entry ``(i, j)`` is ``K(r_i, s_j) / d`` at cell midpoints.
    """
    K = _kernel_grid(spec)
    if spec.c is not None and np.sqrt(np.mean(K * K)) > spec.c * (1 + 1e-12):
        raise ValueError(f"kernel L2 norm exceeds the declared bound c={spec.c}")
    return K / spec.d


# -- JSON-lines files ----------------------------------------------------------


def write_stream(stream: Stream, path) -> None:
    header = {
        "d": stream.d_in,
        "d_out": stream.d_out,
        "T": stream.T,
        "instance_space": stream.instance_space,
        "target_radius": stream.target_radius,
    }
    lines = [json.dumps(header)]
    lines += [json.dumps({"x": x.tolist(), "y": y.tolist()}) for x, y in stream]
    Path(path).write_text("\n".join(lines) + "\n")


def file_stream(path) -> Stream:
    """Load a JSON-lines stream and check every round against its declared balls."""
    text = Path(path).read_text()
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"{path}: line {lineno}: {exc.msg}") from None
    if not records:
        return Stream(np.zeros((0, 0)), np.zeros((0, 0)))
    lineno, header = records[0]
    if not isinstance(header, dict) or "x" in header:
        raise StreamFormatError(f"{path}: line {lineno}: first record must be the header")
    try:
        d = int(header["d"])
        d_out = int(header.get("d_out", d))
        space = header.get("instance_space", "l2_unit")
        radius = float(header.get("target_radius", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(f"{path}: line {lineno}: bad header ({exc})") from None
    if space not in INSTANCE_SPACES:
        raise StreamFormatError(f"{path}: line {lineno}: unknown instance_space {space!r}")
    xs, ys = [], []
    for lineno, rec in records[1:]:
        try:
            x = as_vector(rec["x"])
            y = as_vector(rec["y"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StreamFormatError(f"{path}: line {lineno}: bad record ({exc})") from None
        if x.size != d or y.size != d_out:
            raise StreamFormatError(
                f"{path}: line {lineno}: dims ({x.size}, {y.size}) do not match header ({d}, {d_out})"
            )
        xs.append(x)
        ys.append(y)
    if "T" in header and int(header["T"]) != len(xs):
        raise StreamFormatError(f"{path}: header declares T={header['T']} but file has {len(xs)} rounds")
    stream = Stream(
        np.array(xs).reshape(len(xs), d),
        np.array(ys).reshape(len(ys), d_out),
        instance_space=space,
        target_radius=radius,
        kind="file",
        params={"path": str(path)},
    )
    stream.validate()
    return stream
