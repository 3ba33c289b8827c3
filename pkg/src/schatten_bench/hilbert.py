"""Arithmetic on truncated separable Hilbert spaces.

Vectors are 1-d float arrays of basis coefficients; operators are dense
``(d_out, d_in)`` arrays whose entry ``(i, j)`` is ``<psi_i, f(e_j)>``.
Basis indices are 1-based in the public helpers (``basis(1, d)`` is the
first basis vector) to keep the constructions readable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when operands live in incompatible (truncated) spaces."""


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-d coefficient vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite coefficients")
    return arr


def as_operator(f) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-d operator matrix, got shape {arr.shape}")
    return arr


def basis(k: int, d: int) -> np.ndarray:
    """Basis vector ``e_k`` (1-based) of the ``d``-dimensional truncation."""
    if not 1 <= k <= d:
        raise DimensionError(f"basis index {k} not representable in dimension {d}")
    e = np.zeros(d)
    e[k - 1] = 1.0
    return e


def identity(d: int) -> np.ndarray:
    return np.eye(d)


def zero_operator(d_out: int, d_in: int | None = None) -> np.ndarray:
    return np.zeros((d_out, d_out if d_in is None else d_in))


def inner(u, v) -> float:
    u = as_vector(u)
    v = as_vector(v)
    if u.shape != v.shape:
        raise DimensionError(f"inner product of vectors with dims {u.size} and {v.size}")
    return float(u @ v)


def norm2(v) -> float:
    v = as_vector(v)
    return float(np.sqrt(v @ v))


def norm1(v) -> float:
    return float(np.abs(as_vector(v)).sum())


def tensor(w, v) -> np.ndarray:
    """Rank-one operator ``w (x) v``, i.e. ``u -> <v, u> w``.

    The result maps the space of ``v`` into the space of ``w``.
    """
    return np.outer(as_vector(w), as_vector(v))


@dataclass(frozen=True)
class RankOne:
    """Unmaterialized ``left (x) right``.

    Useful when the output index is too large for a dense matrix, e.g. the
    separation operators ``f_k`` with ``k`` in the tens of thousands.
    """

    left: np.ndarray
    right: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.left.size, self.right.size)

    def materialize(self) -> np.ndarray:
        return tensor(self.left, self.right)

    def __matmul__(self, u):
        return apply(self, u)


def apply(f, v) -> np.ndarray:
    """Evaluate ``f(v)``."""
    v = as_vector(v)
    if isinstance(f, RankOne):
        if f.right.size != v.size:
            raise DimensionError(f"operator expects input dim {f.right.size}, got {v.size}")
        return float(f.right @ v) * f.left
    f = as_operator(f)
    if f.shape[1] != v.size:
        raise DimensionError(f"operator expects input dim {f.shape[1]}, got {v.size}")
    return f @ v


def adjoint(f) -> np.ndarray:
    # transpose is exact, so adjoint(adjoint(f)) == f bit for bit
    return as_operator(f).T


def compose(g, f) -> np.ndarray:
    """``g o f`` (apply ``f`` first)."""
    g = as_operator(g)
    f = as_operator(f)
    if g.shape[1] != f.shape[0]:
        raise DimensionError(f"cannot compose {g.shape} after {f.shape}")
    return g @ f


def trace(g) -> float:
    g = as_operator(g)
    if g.shape[0] != g.shape[1]:
        raise DimensionError(f"trace needs a square operator, got {g.shape}")
    return float(np.trace(g))


def trace_pairing(f, v, w) -> float:
    """``tr(f o (v (x) w))``; equals ``<f(v), w>``.

    ``v (x) w`` maps the output space of ``f`` back into its input space,
    so the composition is an endomorphism of the output space.
    """
    f = as_operator(f)
    v = as_vector(v)
    w = as_vector(w)
    if v.size != f.shape[1] or w.size != f.shape[0]:
        raise DimensionError(
            f"trace pairing of {f.shape} operator with dims v={v.size}, w={w.size}"
        )
    return trace(compose(f, tensor(v, w)))


# -- JSON --------------------------------------------------------------------


def operator_to_dict(f) -> dict:
    f = as_operator(f)
    return {"d_in": int(f.shape[1]), "d_out": int(f.shape[0]), "data": f.ravel().tolist()}


def operator_from_dict(obj: dict) -> np.ndarray:
    try:
        d_in, d_out, data = int(obj["d_in"]), int(obj["d_out"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed operator record: {exc}") from None
    arr = np.asarray(data, dtype=float)
    if arr.size != d_in * d_out:
        raise DimensionError(f"operator record has {arr.size} entries, expected {d_in * d_out}")
    return arr.reshape(d_out, d_in)


def vector_to_dict(v) -> dict:
    # a vector is stored as a d x 1 operator so one schema covers both
    v = as_vector(v)
    return {"d_in": 1, "d_out": int(v.size), "data": v.tolist()}


def vector_from_dict(obj: dict) -> np.ndarray:
    f = operator_from_dict(obj)
    if f.shape[1] != 1:
        raise DimensionError(f"vector record must have d_in == 1, got {f.shape[1]}")
    return f[:, 0].copy()


def dumps_operator(f) -> str:
    return json.dumps(operator_to_dict(f))


def loads_operator(text: str) -> np.ndarray:
    return operator_from_dict(json.loads(text))
