import numpy as np
import pytest

from oimlab.embedder import (EmbedderParams, OptimState, Schedule, embed_backward, embed_forward,
                             load_params, lr_at, save_params, sgd_step)
from oimlab.numerics import central_difference, make_rng, max_rel_error


@pytest.mark.parametrize("activation", ["leaky_relu", "relu", "tanh", "identity"])
def test_backward_fd(activation):
    rng = make_rng(4)
    params = EmbedderParams.init(3, 5, 2, rng, activation)
    x = rng.standard_normal((4, 3))
    g = rng.standard_normal((4, 2))
    grads, gin = embed_backward(embed_forward(params, x)[1], g)
    loss = lambda: float(np.sum(g * embed_forward(params, x)[0]))
    for name, arr in params.arrays().items():
        def f(a, arr=arr):
            saved = arr.copy()
            arr[...] = a
            try:
                return loss()
            finally:
                arr[...] = saved
        assert max_rel_error(grads[name], central_difference(f, arr), 1e-6) < 1e-6, name
    fin = lambda z: float(np.sum(g * embed_forward(params, z)[0]))
    assert max_rel_error(gin, central_difference(fin, x), 1e-6) < 1e-6


def test_uniform_init_bounds():
    p = EmbedderParams.init(4, 9, 2, make_rng(0))
    assert np.abs(p.w1).max() <= 0.5 and np.abs(p.w2).max() <= 1 / 3


@pytest.mark.parametrize("activation", ["leaky_relu", "relu", "identity"])
def test_identity_init_is_exact(activation, rng):
    p = EmbedderParams.identity(3, 8, make_rng(1), activation)
    x = rng.standard_normal((6, 3))
    np.testing.assert_allclose(embed_forward(p, x)[0], x, atol=1e-14)


def test_identity_init_rejects_small_hidden():
    with pytest.raises(ValueError):
        EmbedderParams.identity(3, 5, make_rng(0))


def test_shape_checks():
    with pytest.raises(ValueError):
        EmbedderParams(np.zeros((2, 3)), np.zeros(3), np.zeros((4, 1)), np.zeros(1))
    p = EmbedderParams.init(2, 3, 1, make_rng(0))
    with pytest.raises(ValueError):
        embed_forward(p, np.zeros((1, 5)))


def test_sgd_momentum_displacement():
    # three steps of a constant gradient g: v = g, 1.9g, 2.71g; total 5.61 * lr * g
    p = EmbedderParams(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1), "identity")
    opt = OptimState(momentum=0.9, lr=1.0)
    g = {"b2": np.array([1.0])}
    for _ in range(3):
        sgd_step(p, g, opt)
    assert p.b2[0] == pytest.approx(-5.61)


def test_sgd_two_steps_hand():
    p = EmbedderParams(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1), "identity")
    opt = OptimState(momentum=0.9, lr=1.0)
    for _ in range(2):
        sgd_step(p, {"b1": np.array([1.0])}, opt)
    assert p.b1[0] == pytest.approx(-2.9)


def test_schedule():
    s = Schedule(base_lr=0.003, warmup_steps=10, decay_epoch=16)
    assert lr_at(s, 0, 1) == pytest.approx(0.0003)
    assert lr_at(s, 9, 1) == pytest.approx(0.003)
    assert lr_at(s, 100, 15) == pytest.approx(0.003)
    assert lr_at(s, 100, 16) == pytest.approx(0.0003)


@pytest.mark.parametrize("kwargs", [{"warmup_steps": -1}, {"decay_factor": 0.0}])
def test_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        Schedule(**kwargs)


def test_params_roundtrip(tmp_path):
    p = EmbedderParams.init(3, 4, 2, make_rng(2), "tanh")
    save_params(tmp_path / "p.csv", p)
    back = load_params(tmp_path / "p.csv")
    assert back.activation == "tanh"
    for name in p.NAMES:
        assert np.array_equal(getattr(back, name), getattr(p, name))
