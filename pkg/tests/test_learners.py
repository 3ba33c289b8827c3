import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schatten_bench.hilbert import DimensionError, apply, basis, tensor
from schatten_bench.learners import (
    ConvergenceError,
    ExpertsConfig,
    ExpertsLearner,
    FixedLearner,
    OgdConfig,
    OgdLearner,
    ZeroLearner,
    binary_index_operator,
    binary_index_rank_one,
    bit_vector,
    erm_batch,
    online_to_batch,
    squared_loss_total,
)
from schatten_bench.spectral import BallSpec, schatten_norm
from schatten_bench.streams import (
    BatchLowerBoundConfig,
    batch_b2_sample,
    comparator_loss_closed_form,
    schatten_lower_stream,
    separation_losses,
    separation_stream,
)


# -- zero / fixed ------------------------------------------------------------------


def test_zero_learner():
    np.testing.assert_array_equal(ZeroLearner(4).predict(np.ones(4)), np.zeros(4))
    z = ZeroLearner(32)
    s = schatten_lower_stream(32, 2, 0.7, seed=1)
    total = 0.0
    for x, y in s:
        total += float(np.sum((z.predict(x) - y) ** 2))
        z.update(x, y)
    assert total == pytest.approx(0.49 * 32)


# -- OGD ---------------------------------------------------------------------------


def test_ogd_starts_at_zero():
    L = OgdLearner(OgdConfig(BallSpec(2, 1.0), eta=0.1), 3)
    np.testing.assert_array_equal(L.predict(np.array([0.2, -0.3, 0.5])), np.zeros(3))


def test_ogd_single_step_example():
    c = 0.8
    L = OgdLearner(OgdConfig(BallSpec(2, c), eta=0.25), 3)
    L.update(basis(1, 3), c * basis(1, 3))
    np.testing.assert_allclose(L.predict(basis(1, 3)), 0.5 * c * basis(1, 3))
    np.testing.assert_allclose(L.operator(), 0.5 * c * tensor(basis(1, 3), basis(1, 3)))


def test_ogd_dimension_errors():
    L = OgdLearner(OgdConfig(BallSpec(2, 1.0), eta=0.1), 3, 2)
    with pytest.raises(DimensionError):
        L.predict(np.ones(4))
    with pytest.raises(DimensionError):
        L.update(np.ones(3), np.ones(3))


def test_ogd_auto_step_size():
    cfg = OgdConfig(BallSpec(2, 2.0), T_hint=16, target_radius=1.0)
    assert cfg.step_size == pytest.approx(4.0 / (2 * 3.0 * 4))
    with pytest.raises(ValueError):
        OgdConfig(BallSpec(2, 1.0))
    with pytest.raises(ValueError):
        OgdConfig(BallSpec(2, 1.0), eta=-1.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 1.5, 2, 3, math.inf]), st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_ogd_iterates_stay_feasible(p, seed, eta):
    rng = np.random.default_rng(seed)
    c = 0.6
    ball = BallSpec(p, c)
    L = OgdLearner(OgdConfig(ball, eta=eta), 5, 4)
    for _ in range(15):
        x = rng.normal(size=5)
        x /= max(1.0, np.linalg.norm(x))
        y = rng.normal(size=4) * 2
        L.update(x, y)
        assert schatten_norm(L.operator(), p) <= c * (1 + 1e-9)


def test_ogd_tracked_frobenius_matches_state():
    rng = np.random.default_rng(0)
    L = OgdLearner(OgdConfig(BallSpec(3, 1.0), eta=0.3), 6)
    for _ in range(40):
        x = rng.normal(size=6) * (rng.random(6) < 0.4)
        L.update(x, rng.normal(size=6))
        assert L._fro2 == pytest.approx(float(np.sum(L.F**2)), rel=1e-9, abs=1e-12)


# -- separation class -----------------------------------------------------------------


def test_binary_index_operator_examples():
    np.testing.assert_array_equal(binary_index_operator(0, 6), np.zeros((6, 6)))
    f5 = binary_index_operator(5, 8)
    np.testing.assert_array_equal(apply(f5, basis(1, 8)), basis(5, 8))
    np.testing.assert_array_equal(apply(f5, basis(2, 8)), np.zeros(8))
    np.testing.assert_array_equal(f5, tensor(basis(5, 8), basis(1, 8) + basis(3, 8)))


@pytest.mark.parametrize("k", [1, 2, 3, 7, 12, 31])
def test_binary_index_operator_on_basis(k):
    d = 32
    f = binary_index_operator(k, d)
    for t in range(1, d + 1):
        np.testing.assert_array_equal(apply(f, basis(t, d)), ((k >> (t - 1)) & 1) * basis(k, d))


def test_binary_index_operator_errors():
    with pytest.raises(DimensionError, match="d >= 9"):
        binary_index_operator(9, 8)
    with pytest.raises(DimensionError):
        bit_vector(16, 4)
    with pytest.raises(ValueError):
        binary_index_operator(-1, 4)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**16), st.integers(0, 10**6))
def test_separation_operators_bounded_on_l1_ball(k, seed):
    rng = np.random.default_rng(seed)
    d = 17
    x = rng.normal(size=d)
    x /= np.abs(x).sum()
    assert np.linalg.norm(apply(binary_index_rank_one(k, d), x)) <= 1 + 1e-12


def test_rank_one_form_matches_dense():
    for k in (1, 5, 6, 13):
        np.testing.assert_array_equal(binary_index_rank_one(k, 16, 16).materialize(), binary_index_operator(k, 16))


# -- experts ---------------------------------------------------------------------------


def test_experts_config_constants():
    cfg = ExpertsConfig(T=128, d=128)
    assert cfg.n_experts == 4 * 128**2
    assert cfg.threshold == pytest.approx(1 / (2 * math.sqrt(128)))
    assert cfg.learning_rate == pytest.approx(0.25 * math.sqrt(8 * math.log(4 * 128**2) / 128))
    # 4 sqrt(2T ln 4T^2) equals 8 sqrt(T ln 2T)
    assert cfg.overhead_bound() == pytest.approx(8 * math.sqrt(128 * math.log(256)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(0, 10**6))
def test_index_set_size_bound(T, seed):
    rng = np.random.default_rng(seed)
    d = 8 * T
    learner = ExpertsLearner(ExpertsConfig(T, d))
    y = rng.normal(size=d) * (rng.random(d) < rng.random())
    y /= max(1.0, np.linalg.norm(y))
    S = learner.index_set(y)
    assert S.size <= 4 * T
    assert np.all(np.diff(S) < 0)


def test_index_set_flat_extreme():
    T = 16
    learner = ExpertsLearner(ExpertsConfig(T, 4 * T))
    y = np.full(4 * T, 1 / math.sqrt(4 * T))
    assert learner.index_set(y).size == 4 * T


def test_experts_weights_sum_to_one_and_comparator_inequality():
    T = 64
    stream = separation_stream(T, T, 21, seed=3, instance_mode="dense")
    learner = ExpertsLearner(ExpertsConfig(T, T))
    for x, y in stream:
        w0, w = learner.weights()
        assert w0 + w.sum() == pytest.approx(1.0, abs=1e-12)
        learner.update(x, y)
    f_loss = squared_loss_total(binary_index_operator(21, T), stream.xs, stream.ys)
    assert learner.best_expert_loss() <= f_loss + 2 + 1e-9


def test_experts_switch_identity_dense():
    T = 32
    k = 11
    stream = separation_stream(T, T, k, seed=9, instance_mode="dense")
    learner = ExpertsLearner(ExpertsConfig(T, T))
    for x, y in stream:
        learner.update(x, y)
    t_star = next(i for i, S in enumerate(learner.index_sets, start=1) if k in S)
    r_star = int(np.flatnonzero(learner.sorted_list(t_star) == k)[0]) + 1
    f = binary_index_operator(k, T)
    for t in range(1, T + 1):
        pred = learner.expert_predict(t_star, r_star, t, stream.xs[t - 1])
        if t <= t_star:
            np.testing.assert_array_equal(pred, np.zeros(T))
        else:
            np.testing.assert_array_equal(pred, f @ stream.xs[t - 1])


def test_experts_block_matches_explicit_hedge():
    # brute force over all 4T^2 experts on a tiny horizon
    T, d = 3, 4
    rng = np.random.default_rng(2)
    learner = ExpertsLearner(ExpertsConfig(T, d))
    xs = rng.normal(size=(T, d))
    xs /= np.abs(xs).sum(axis=1, keepdims=True)
    ys = rng.normal(size=(T, d))
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    losses = np.zeros((T, 4 * T))
    eta = learner.eta
    for t in range(1, T + 1):
        x, y = xs[t - 1], ys[t - 1]
        preds = np.zeros((T, 4 * T, d))
        for i in range(1, T + 1):
            for j in range(1, 4 * T + 1):
                if i < t:
                    preds[i - 1, j - 1] = learner.expert_predict(i, j, t, x)
        w = np.exp(-eta * (losses - losses.min()))
        w /= w.sum()
        want = np.einsum("ij,ijd->d", w, preds)
        np.testing.assert_allclose(learner.predict(x), want, atol=1e-14)
        losses += np.sum((preds - y) ** 2, axis=2)
        learner.update(x, y)


def test_experts_errors():
    learner = ExpertsLearner(ExpertsConfig(2, 3))
    with pytest.raises(DimensionError):
        learner.predict(np.ones(4))
    learner.update(np.ones(3) / 3, np.zeros(3))
    learner.update(np.ones(3) / 3, np.zeros(3))
    with pytest.raises(ValueError, match="exhausted"):
        learner.update(np.ones(3) / 3, np.zeros(3))


@pytest.mark.parametrize("T", [32, 128])
def test_experts_regret_on_realizable_stream(T):
    stream = separation_stream(T, T, 5, seed=T)
    learner = ExpertsLearner(ExpertsConfig(T, T))
    loss = 0.0
    for x, y in stream:
        loss += float(np.sum((learner.predict(x) - y) ** 2))
        learner.update(x, y)
    best = squared_loss_total(binary_index_operator(5, T), stream.xs, stream.ys)
    assert best == 0.0 and separation_losses(stream).min() == 0.0
    assert loss - best <= 2 + 8 * math.sqrt(T * math.log(2 * T))


# -- batch ---------------------------------------------------------------------------------


def test_online_to_batch_constant_learner():
    f = np.arange(6.0).reshape(2, 3)
    out = online_to_batch(FixedLearner(f), [(np.ones(3), np.ones(2))] * 4)
    np.testing.assert_array_equal(out, f)
    with pytest.raises(ValueError):
        online_to_batch(FixedLearner(f), [])


def test_online_to_batch_single_round_and_feasibility():
    c = 1.0
    cfg = OgdConfig(BallSpec(2, c), eta=0.25)
    out = online_to_batch(OgdLearner(cfg, 3), [(basis(1, 3), basis(2, 3))])
    np.testing.assert_allclose(out, 0.5 * tensor(basis(2, 3), basis(1, 3)))
    sample, _ = batch_b2_sample(BatchLowerBoundConfig(n=16, p=1.5, c=c, construction="b2"), seed=4)
    cfg = OgdConfig(BallSpec(1.5, c), T_hint=16)
    avg = online_to_batch(OgdLearner(cfg, sample.d_in), sample)
    assert schatten_norm(avg, 1.5) <= c * (1 + 1e-9)


def test_erm_examples():
    c = 0.9
    f = erm_batch([(basis(1, 3), c * basis(1, 3))], BallSpec(2, c))
    np.testing.assert_allclose(apply(f, basis(1, 3)), c * basis(1, 3), atol=1e-7)
    f0 = erm_batch([(basis(1, 3), np.zeros(3))], BallSpec(2, c))
    np.testing.assert_array_equal(f0, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        erm_batch([], BallSpec(2, c))


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, math.inf])
@pytest.mark.parametrize("T", [4, 16, 64])
def test_erm_reaches_closed_form_comparator(p, T):
    stream = schatten_lower_stream(T, p, 1.0, seed=T)
    f = erm_batch(stream, BallSpec(p, 1.0))
    assert schatten_norm(f, p) <= 1 + 1e-9
    assert squared_loss_total(f, stream.xs, stream.ys) <= comparator_loss_closed_form(T, p, 1.0) + 1e-8


def test_erm_convergence_error_carries_iterate():
    stream = schatten_lower_stream(8, 1.5, 1.0, seed=0)
    with pytest.raises(ConvergenceError) as info:
        erm_batch(stream, BallSpec(1.5, 1.0), tol=0.0, max_iter=2)
    assert info.value.last_iterate.shape == (8, 8)
