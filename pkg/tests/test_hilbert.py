import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from schatten_bench.hilbert import (
    DimensionError,
    RankOne,
    adjoint,
    apply,
    basis,
    compose,
    dumps_operator,
    identity,
    inner,
    loads_operator,
    norm2,
    tensor,
    trace,
    trace_pairing,
    vector_from_dict,
    vector_to_dict,
)
from schatten_bench.spectral import singular_values
from schatten_bench.streams import comparator_operator

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def mats(max_d=8):
    return st.tuples(st.integers(1, max_d), st.integers(1, max_d)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


def test_inner_examples():
    assert inner(basis(1, 3), basis(1, 3)) == 1
    assert inner(basis(1, 3), basis(2, 3)) == 0
    assert inner([1, 2, 0], [3, -1, 5]) == 1


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionError):
        inner([1, 2], [1, 2, 3])


def test_basis_vector_has_single_unit_coefficient():
    e = basis(3, 5)
    assert np.count_nonzero(e) == 1 and e[2] == 1.0
    with pytest.raises(DimensionError):
        basis(6, 5)


def test_non_finite_vector_rejected():
    with pytest.raises(ValueError):
        norm2([1.0, np.nan])


def test_tensor_examples():
    t = tensor(basis(1, 2), basis(2, 2))
    np.testing.assert_array_equal(apply(t, basis(2, 2)), basis(1, 2))
    np.testing.assert_array_equal(apply(t, basis(1, 2)), np.zeros(2))
    np.testing.assert_array_equal(tensor([1, 1], [1, 0]), [[1, 0], [1, 0]])


def test_apply_examples():
    v = np.array([0.5, -2.0, 3.0])
    np.testing.assert_array_equal(apply(identity(3), v), v)
    np.testing.assert_array_equal(apply(tensor(basis(3, 4), basis(2, 4)), basis(2, 4)), basis(3, 4))
    sigma = np.array([1.0, -1.0, 1.0, 1.0])
    T, p, c = 4, 2.0, 1.5
    f = comparator_operator(sigma, p, c)
    for t in range(1, T + 1):
        np.testing.assert_allclose(apply(f, basis(t, T)), c * sigma[t - 1] / T ** (1 / p) * basis(t, T))


def test_apply_columns_and_mismatch():
    f = np.arange(6.0).reshape(2, 3)
    for j in range(1, 4):
        np.testing.assert_array_equal(apply(f, basis(j, 3)), f[:, j - 1])
    with pytest.raises(DimensionError):
        apply(f, np.ones(2))


def test_rank_one_matches_tensor():
    w, v = np.array([1.0, -2.0, 0.5]), np.array([3.0, 1.0])
    r = RankOne(w, v)
    np.testing.assert_array_equal(r.materialize(), tensor(w, v))
    u = np.array([0.25, -1.0])
    np.testing.assert_allclose(r @ u, inner(v, u) * w)
    assert r.shape == (3, 2)


def test_trace_examples():
    assert trace(identity(4)) == 4
    w = np.array([0.6, 0.8])
    assert trace(tensor(w, w)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DimensionError):
        trace(np.ones((2, 3)))


def test_compose_conformability():
    with pytest.raises(DimensionError):
        compose(np.ones((2, 3)), np.ones((2, 3)))


def test_trace_pairing_examples():
    assert trace_pairing(identity(3), basis(1, 3), basis(1, 3)) == 1
    f = tensor(basis(2, 3), basis(1, 2))
    assert trace_pairing(f, basis(1, 2), basis(2, 3)) == 1
    with pytest.raises(DimensionError):
        trace_pairing(f, basis(1, 3), basis(2, 3))


@settings(max_examples=100, deadline=None)
@given(mats(8), st.data())
def test_trace_pairing_matches_inner(f, data):
    m, n = f.shape
    v = data.draw(arrays(np.float64, n, elements=finite))
    w = data.draw(arrays(np.float64, m, elements=finite))
    lhs = trace_pairing(f, v, w)
    rhs = inner(apply(f, v), w)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs), np.abs(f).sum() * np.abs(v).sum() * np.abs(w).sum())


@settings(max_examples=100, deadline=None)
@given(mats(32), st.data(), finite, finite)
def test_linearity(f, data, a, b):
    n = f.shape[1]
    u = data.draw(arrays(np.float64, n, elements=finite))
    v = data.draw(arrays(np.float64, n, elements=finite))
    lhs = apply(f, a * u + b * v)
    rhs = a * apply(f, u) + b * apply(f, v)
    scale = max(1.0, float(np.abs(f).sum() * (abs(a) * np.abs(u).max() + abs(b) * np.abs(v).max())))
    assert np.abs(lhs - rhs).max() <= 1e-10 * scale


@settings(max_examples=100, deadline=None)
@given(mats(8), st.data())
def test_adjoint_identity(f, data):
    m, n = f.shape
    v = data.draw(arrays(np.float64, n, elements=finite))
    w = data.draw(arrays(np.float64, m, elements=finite))
    lhs = inner(apply(f, v), w)
    rhs = inner(v, apply(adjoint(f), w))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, np.abs(f).sum() * np.abs(v).sum() * np.abs(w).sum())
    np.testing.assert_array_equal(adjoint(adjoint(f)), f)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite), arrays(np.float64, st.integers(1, 8), elements=finite))
def test_tensor_has_rank_at_most_one(w, v):
    s = singular_values(tensor(w, v))
    if s.size > 1:
        assert s[1] <= 1e-10 * max(s[0], 1e-300)


def test_json_round_trip():
    f = np.array([[1.0, -2.5, 3.0], [0.1, 0.0, 7.0]])
    text = dumps_operator(f)
    assert '"d_in": 3' in text and '"d_out": 2' in text
    np.testing.assert_array_equal(loads_operator(text), f)
    v = np.array([1.0, 2.0])
    np.testing.assert_array_equal(vector_from_dict(vector_to_dict(v)), v)
    with pytest.raises(DimensionError):
        loads_operator('{"d_in": 2, "d_out": 2, "data": [1, 2, 3]}')
