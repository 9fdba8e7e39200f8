from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpbridge.core import RngSpec
from jumpbridge.errors import SizeError, UnsupportedOperationError
from jumpbridge.metrics import (
    GruLayer,
    GruNet,
    NetConfig,
    correlation_matrix,
    discriminative_scores,
    ecdf_ks,
    evaluate,
    gru_cell,
    predictive_scores,
    qq_quantiles,
    quadratic_variation,
    quantile_table,
    score_from_accuracy,
    train_predictor,
    wasserstein2_1d,
    write_tables,
)
from jumpbridge.metrics.scores import MinMax, predictive_score, predictor_data

from conftest import make_dataset

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=30)


# ---------------------------------------------------------------- quadratic variation


def test_quadratic_variation_examples():
    assert quadratic_variation(np.array([[0.0, 1.0, 1.0, 2.0]]))[0] == 2.0
    assert quadratic_variation(np.full((2, 5), 3.0)).tolist() == [0.0, 0.0]
    assert quadratic_variation(np.zeros((2, 5, 3))).shape == (2, 3)


def test_brownian_quadratic_variation_concentrates():
    rng = np.random.default_rng(0)
    paths = np.cumsum(rng.normal(0, math.sqrt(1 / 1000), (200, 1000)), axis=1)
    qv = quadratic_variation(np.concatenate([np.zeros((200, 1)), paths], axis=1))
    assert np.all(np.abs(qv - 1.0) < 0.2)
    assert abs(qv.mean() - 1.0) < 0.01


# ---------------------------------------------------------------- wasserstein and KS


def test_wasserstein_examples():
    assert wasserstein2_1d([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == 0.0
    assert wasserstein2_1d([0.0], [3.0]) == 3.0
    assert wasserstein2_1d([0.0, 2.0], [1.0, 3.0]) == pytest.approx(1.0, abs=1e-12)


def test_wasserstein_unequal_sizes():
    # quantile functions: a = 0 on (0, 1/2], 1 on (1/2, 1]; b = 0, 0, 1 on thirds
    assert wasserstein2_1d([0.0, 1.0], [0.0, 0.0, 1.0]) == pytest.approx(math.sqrt(1 / 6), abs=1e-12)
    assert wasserstein2_1d([5.0], [1.0, 3.0]) == pytest.approx(math.sqrt((16 + 4) / 2), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(samples, samples, samples)
def test_wasserstein_metric_axioms(a, b, c):
    ab = wasserstein2_1d(a, b)
    assert wasserstein2_1d(a, a) == 0.0
    assert ab >= 0
    assert ab == pytest.approx(wasserstein2_1d(b, a), abs=1e-12)
    assert ab <= wasserstein2_1d(a, c) + wasserstein2_1d(c, b) + 1e-9


@settings(max_examples=100, deadline=None)
@given(samples, st.floats(-100, 100))
def test_wasserstein_shift(a, s):
    a = np.array(a)
    assert wasserstein2_1d(a, a + s) == pytest.approx(abs(s), rel=1e-9, abs=1e-9)


def test_ks_examples():
    assert ecdf_ks([1.0, 2.0], [2.0, 1.0]) == 0.0
    assert ecdf_ks([0.0, 1.0], [5.0, 6.0]) == 1.0
    assert ecdf_ks([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]) == pytest.approx(1 / 3, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(samples, samples, samples)
def test_ks_metric_axioms(a, b, c):
    ab = ecdf_ks(a, b)
    assert ecdf_ks(a, a) == 0.0
    assert 0.0 <= ab <= 1.0
    assert ab == ecdf_ks(b, a)
    assert ab <= ecdf_ks(a, c) + ecdf_ks(c, b) + 1e-12


@settings(max_examples=50, deadline=None)
@given(samples, samples, st.floats(-100, 100))
def test_ks_shift_invariance(a, b, s):
    a, b = np.array(a), np.array(b)
    shifted = ecdf_ks(a + s, b + s)
    if np.array_equal(np.argsort(np.concatenate([a, b]), kind="stable"), np.argsort(np.concatenate([a + s, b + s]), kind="stable")):
        assert shifted == ecdf_ks(a, b)


def test_qq_pairs():
    a = np.linspace(0, 1, 101)
    for lvl, qa, qb in qq_quantiles(a, a, [0.1, 0.5, 0.9]):
        assert qa == qb
    for lvl, qa, qb in qq_quantiles(a, a + 1, [0.1, 0.5, 0.9]):
        assert qb - qa == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        qq_quantiles(a, a, [0.0])


# ---------------------------------------------------------------- correlations and tables


def test_correlation_cases():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 20))
    dup = np.stack([x, x], axis=-1)
    assert correlation_matrix(dup)[0, 1] == pytest.approx(1.0, abs=1e-12)
    ind = rng.normal(size=(100, 100, 2))
    assert abs(correlation_matrix(ind)[0, 1]) < 3 / math.sqrt(10_000)
    np.testing.assert_array_equal(correlation_matrix(x[:, :, None]), [[1.0]])


def test_correlation_constant_dimension_warns():
    v = np.stack([np.random.default_rng(2).normal(size=(10, 5)), np.ones((10, 5))], axis=-1)
    with pytest.warns(UserWarning):
        m = correlation_matrix(v)
    np.testing.assert_array_equal(m, np.eye(2))


def test_quantile_table_shape():
    ds = make_dataset(np.random.default_rng(3).normal(size=(40, 9, 3)))
    assert quantile_table(ds).shape == (3, 2)


# ---------------------------------------------------------------- GRU


def test_zero_weights_keep_zero_state():
    layer = GruLayer.zeros(2, 3)
    h = gru_cell(np.ones((1, 2)), np.zeros((1, 3)), layer)
    np.testing.assert_array_equal(h, np.zeros((1, 3)))


def test_zero_update_preactivation_averages():
    layer = GruLayer.zeros(1, 2)
    layer.b["n"][:] = 0.5
    h = np.array([[0.2, -0.4]])
    out = gru_cell(np.zeros((1, 1)), h, layer)
    np.testing.assert_allclose(out, 0.5 * h + 0.5 * np.tanh(0.5), rtol=1e-15)


@pytest.mark.parametrize("per_step,layers", [(False, 2), (True, 1)])
def test_gru_gradients_match_finite_differences(per_step, layers):
    rng = np.random.default_rng(4)
    net = GruNet.init(3, 4, layers, per_step, rng)
    X = rng.normal(size=(5, 6, 3))
    y = rng.normal(size=(5, 6)) if per_step else (rng.random(5) > 0.5).astype(float)
    _, grads = net.loss_and_grads(X, y)
    step = 1e-6
    for name, tensor in net.parameters().items():
        flat = tensor.reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + step
            up = net.loss_and_grads(X, y)[0]
            flat[idx] = old - step
            down = net.loss_and_grads(X, y)[0]
            flat[idx] = old
            fd = (up - down) / (2 * step)
            g = grads[name].reshape(-1)[idx]
            assert abs(g - fd) <= 1e-4 * max(abs(fd), 1e-6), (name, idx, g, fd)


def test_adam_reduces_loss():
    rng = np.random.default_rng(5)
    net = GruNet.init(1, 4, 1, False, rng)
    X = rng.normal(size=(64, 5, 1))
    y = (X[:, -1, 0] > 0).astype(float)
    first = net.loss_and_grads(X, y)[0]
    for _ in range(300):
        net.adam_step(net.loss_and_grads(X, y)[1], lr=1e-2)
    assert net.loss_and_grads(X, y)[0] < 0.5 * first


# ---------------------------------------------------------------- scores


def test_score_from_accuracy():
    assert score_from_accuracy(0.5) == 0.0
    assert score_from_accuracy(1.0) == 0.5
    assert score_from_accuracy(0.0) == 0.5


def test_discriminative_score_needs_two_series():
    ds = make_dataset(np.zeros((1, 4)))
    with pytest.raises(SizeError):
        discriminative_scores(ds, ds, runs=1)


def test_shuffled_real_is_indistinguishable():
    rng = np.random.default_rng(6)
    v = np.cumsum(np.concatenate([np.zeros((400, 1, 2)), rng.normal(0, 0.1, (400, 12, 2))], axis=1), axis=1)
    real = make_dataset(v)
    synth = real.with_values(v[rng.permutation(400)])
    score = discriminative_scores(real, synth, runs=3, net_cfg=NetConfig(epochs=10), rng=RngSpec(1))
    assert 0.0 <= score.mean <= 0.1


def test_discriminator_separates_different_laws():
    rng = np.random.default_rng(7)
    a = np.cumsum(rng.normal(0, 0.1, (300, 10, 1)), axis=1)
    b = np.cumsum(rng.normal(0, 0.4, (300, 10, 1)), axis=1)
    score = discriminative_scores(make_dataset(a), make_dataset(b), runs=2, net_cfg=NetConfig(epochs=30, hidden=4, lr=1e-2), rng=RngSpec(2))
    assert score.mean > 0.2


def test_predictive_score_on_constant_target():
    rng = np.random.default_rng(8)
    v = np.stack([rng.normal(size=(50, 10)), np.full((50, 10), 3.0)], axis=-1)
    ds = make_dataset(v)
    scale = MinMax(ds.values)
    X, y = predictor_data(ds.values, scale)
    assert np.all(y == 0.0)
    net = train_predictor(ds, NetConfig(epochs=500, lr=1e-2, batch_size=50, hidden=1), rng, scale)
    # absolute-error gradients keep their size near the optimum; shrink the step
    for lr in (1e-3, 1e-4):
        net.reset_optimizer()
        for _ in range(500):
            net.adam_step(net.loss_and_grads(X, y)[1], lr=lr)
    assert predictive_score(net, ds, scale) <= 1e-3


def test_predictive_score_needs_two_features():
    ds = make_dataset(np.zeros((4, 5)))
    with pytest.raises(UnsupportedOperationError):
        predictive_scores(ds, ds, runs=1)


def test_scores_reproducible_and_worker_independent():
    rng = np.random.default_rng(9)
    real = make_dataset(rng.normal(size=(60, 6, 2)))
    synth = make_dataset(rng.normal(size=(60, 6, 2)))
    cfg = NetConfig(epochs=3)
    a = discriminative_scores(real, synth, 3, cfg, RngSpec(3))
    b = discriminative_scores(real, synth, 3, cfg, RngSpec(3), workers=3)
    assert a == b


# ---------------------------------------------------------------- report


def test_evaluate_identical_inputs(tmp_path):
    ds = make_dataset(np.random.default_rng(10).normal(size=(30, 8, 2)), names=("a", "b"))
    rep = evaluate(ds, ds, scores=False)
    assert rep.qv_w2 == [0.0, 0.0]
    assert rep.ks["increments"] == [0.0, 0.0]
    assert all(qa == qb for dim in rep.qq_pairs for _, qa, qb in dim)
    paths = write_tables(ds, ds, rep, tmp_path)
    assert {p.name for p in paths} == {"qq.csv", "ecdf.csv", "qv.csv", "corr.csv", "quantile_table.csv"}
    header = (tmp_path / "quantile_table.csv").read_text().splitlines()[0]
    assert header == "feature,real_5%,synthetic_5%,real_95%,synthetic_95%"
