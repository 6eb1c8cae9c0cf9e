import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import forward_loop
from sparseapt import nn


def tiny_net(rng, dims=(3, 4, 3), bias=True):
    spec = nn.NetworkSpec(dims, include_bias=bias)
    p = nn.ParamVector(spec, rng.normal(size=spec.n_params))
    return spec, p


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def test_param_count_and_layout():
    spec = nn.NetworkSpec((784, 300, 100, 10))
    assert spec.n_params == 784 * 300 + 300 + 300 * 100 + 100 + 100 * 10 + 10 == 266610
    segs = spec.layout
    assert segs[0].offset == 0
    for a, b in zip(segs[:-1], segs[1:]):
        assert a.stop == b.offset
    assert segs[-1].stop == spec.n_params
    assert nn.NetworkSpec((5, 2), include_bias=False).n_params == 10


def test_spec_rejects_bad_dims():
    with pytest.raises(ValueError):
        nn.NetworkSpec((3,))
    with pytest.raises(ValueError):
        nn.NetworkSpec((3, 0, 2))


def test_matrices_round_trip(rng):
    spec, p = tiny_net(rng)
    q = nn.ParamVector.from_matrices(spec, p.matrices())
    np.testing.assert_array_equal(p.values, q.values)


def test_glorot_limits_and_determinism():
    spec = nn.NetworkSpec((784, 300, 100, 10))
    a = nn.glorot_init(spec, 3)
    b = nn.glorot_init(spec, 3)
    np.testing.assert_array_equal(a.values, b.values)
    limit = np.sqrt(6 / 1084)
    assert limit == pytest.approx(0.0743980, abs=1e-7)
    w0 = a.weight(0)
    assert np.abs(w0).max() <= limit and np.abs(w0).max() > 0.99 * limit
    for i in range(spec.n_layers):
        assert not a.bias(i).any()


def test_forward_examples():
    spec = nn.NetworkSpec((1, 1))
    p = nn.ParamVector(spec, [2.0, 1.0])
    assert nn.forward(spec, p, [[3.0]]).tolist() == [[7.0]]
    spec = nn.NetworkSpec((4, 5, 3))
    z = nn.forward(spec, nn.ParamVector(spec, np.zeros(spec.n_params)), np.ones((2, 4)))
    assert not z.any()


def test_forward_matches_loop_oracle(rng):
    for _ in range(5):
        spec, p = tiny_net(rng, dims=(4, 6, 5, 3))
        x = rng.normal(size=(7, 4))
        ref = forward_loop(p.matrices(), x)
        np.testing.assert_allclose(nn.forward(spec, p, x), ref, rtol=1e-12, atol=1e-12)


def test_forward_shape_error_names_layer(rng):
    spec, p = tiny_net(rng)
    with pytest.raises(ValueError, match="layer 0"):
        nn.forward(spec, p, np.zeros((2, 5)))


def test_data_loss_values():
    assert nn.data_loss(np.zeros((4, 10)), [0, 1, 2, 3]) == pytest.approx(np.log(10), abs=1e-12)
    z = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    y = np.array([1, 0])
    each = [nn.data_loss(z[i:i + 1], y[i:i + 1]) for i in range(2)]
    assert nn.data_loss(z, y) == pytest.approx(np.mean(each), rel=1e-15)
    # larger correct margins shrink the loss toward 0
    losses = [nn.data_loss(np.array([[m, 0.0]]), [0]) for m in (1.0, 5.0, 20.0, 600.0)]
    assert all(a > b >= 0 for a, b in zip(losses, losses[1:]))
    assert np.isfinite(nn.data_loss(np.array([[1000.0, -1000.0]]), [1]))


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        spec, p = tiny_net(rng, dims=(3, 5, 4), bias=bool(rng.integers(2)))
        batch = nn.Batch(rng.normal(size=(6, 3)), rng.integers(0, 4, size=6))
        g = nn.backward(spec, p, batch)

        def f():
            return nn.data_loss(nn.forward(spec, p, batch.inputs), batch.labels)

        fd = central_diff(f, p.values)
        rel = np.abs(g - fd) / np.maximum(1e-6, np.abs(g) + np.abs(fd))
        assert rel.max() < 1e-4


def test_gradient_zero_input_zero_weights():
    spec = nn.NetworkSpec((3, 4, 2))
    p = nn.ParamVector(spec, np.zeros(spec.n_params))
    g = nn.ParamVector(spec, nn.backward(spec, p, nn.Batch(np.zeros((2, 3)), np.array([0, 1]))))
    assert not g.weight(0).any()


def test_gradient_invariant_to_duplication_and_shuffle(rng):
    spec, p = tiny_net(rng)
    x, y = rng.normal(size=(5, 3)), rng.integers(0, 3, size=5)
    g = nn.backward(spec, p, nn.Batch(x, y))
    g2 = nn.backward(spec, p, nn.Batch(np.vstack([x, x]), np.concatenate([y, y])))
    np.testing.assert_allclose(g, g2, rtol=1e-12, atol=1e-15)
    perm = rng.permutation(5)
    g3 = nn.backward(spec, p, nn.Batch(x[perm], y[perm]))
    np.testing.assert_allclose(g, g3, rtol=1e-12, atol=1e-15)
    assert nn.data_loss(nn.forward(spec, p, x[perm]), y[perm]) == pytest.approx(
        nn.data_loss(nn.forward(spec, p, x), y), rel=1e-12)


def test_sgd_momentum():
    w = np.array([1.0, -2.0])
    st_ = nn.SGDState(np.zeros(2))
    nn.sgd_momentum_step(w, np.zeros(2), st_, lr=0.1)
    assert w.tolist() == [1.0, -2.0]
    g = np.array([0.5, 1.0])
    w = np.zeros(2)
    st_ = nn.SGDState(np.zeros(2))
    nn.sgd_momentum_step(w, g, st_, lr=1.0, momentum=0.9)
    nn.sgd_momentum_step(w, g, st_, lr=1.0, momentum=0.9)
    np.testing.assert_allclose(w, -2.9 * g, rtol=1e-15)
    w = np.zeros(2)
    nn.sgd_momentum_step(w, g, nn.SGDState(np.ones(2)), lr=0.1, momentum=0.0)
    np.testing.assert_allclose(w, -0.1 * g)


def test_adadelta_first_step():
    g = np.array([0.3, -2.0, 0.0])
    w = np.zeros(3)
    st_ = nn.AdadeltaState(np.zeros(3), np.zeros(3))
    nn.adadelta_step(w, g, st_)
    eps = 1e-6
    expected = -np.sqrt(eps) / np.sqrt(0.05 * g * g + eps) * g
    np.testing.assert_allclose(w, expected, rtol=1e-14)
    assert w[2] == 0.0


def test_adadelta_deterministic(rng):
    grads = rng.normal(size=(20, 4))

    def run():
        w = np.zeros(4)
        s = nn.AdadeltaState(np.zeros(4), np.zeros(4))
        for g in grads:
            nn.adadelta_step(w, g, s)
        return w

    np.testing.assert_array_equal(run(), run())


def test_error_rate_cases():
    spec = nn.NetworkSpec((2, 2), include_bias=False)
    p = nn.ParamVector(spec, [1.0, 0.0, 0.0, 1.0])  # identity: predicts argmax of input
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert nn.error_rate(spec, p, x, [0, 1, 0]) == 0.0
    assert nn.error_rate(spec, p, x, [1, 0, 1]) == 1.0
    assert nn.error_rate(spec, p, x, [0, 1, 1]) == pytest.approx(1 / 3)
    # ties resolve to the lowest class
    assert nn.predict(spec, p, np.array([[0.5, 0.5]])).tolist() == [0]
    with pytest.raises(ValueError):
        nn.error_rate(spec, p, np.zeros((0, 2)), [])


@given(st.integers(1, 4), st.integers(1, 5), st.integers(2, 4), st.booleans())
def test_loss_non_negative(d, h, c, bias):
    rng = np.random.default_rng(d * 100 + h * 10 + c)
    spec = nn.NetworkSpec((d, h, c), include_bias=bias)
    p = nn.glorot_init(spec, 0)
    x = rng.normal(size=(4, d))
    y = rng.integers(0, c, size=4)
    loss, grad = nn.loss_and_grad(spec, p, nn.Batch(x, y))
    assert loss >= 0 and grad.shape == (spec.n_params,)
    assert loss == pytest.approx(nn.data_loss(nn.forward(spec, p, x), y), rel=1e-14)
