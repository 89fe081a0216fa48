import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from krf.optim import Adam, AdamState, adam_step, clip_global_norm
from krf.tensor import Tensor


@given(st.integers(0, 10_000), st.floats(1e-4, 0.1))
def test_first_step_is_lr_times_sign(seed, lr):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=7)
    g[np.abs(g) < 1e-3] = 1e-3
    p = rng.normal(size=7)
    start = p.copy()
    adam_step({"p": p}, {"p": g}, AdamState(), lr=lr)
    np.testing.assert_allclose(p - start, -lr * np.sign(g), rtol=1e-4)


def test_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    adam_step({"p": p}, {"p": np.zeros(2)}, AdamState(), lr=0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_missing_gradient_skipped():
    p = np.array([1.0])
    state = AdamState()
    adam_step({"p": p}, {"p": None}, state)
    assert p[0] == 1.0 and state.t == 1


def test_quadratic_bowl():
    theta = np.random.default_rng(0).normal(size=10)
    norm0 = np.linalg.norm(theta)
    state = AdamState()
    norms = []
    for _ in range(200):
        adam_step({"t": theta}, {"t": 2 * theta}, state, lr=0.01)
        norms.append(np.linalg.norm(theta))
    warm = 10
    assert all(b < a for a, b in zip(norms[warm:], norms[warm + 1 :]))
    assert norms[-1] < 0.1 * norm0


def test_clip_global_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]]), "c": None}
    total = clip_global_norm(grads, 1.0)
    assert total == 5.0
    joint = np.sqrt(np.sum(grads["a"] ** 2) + np.sum(grads["b"] ** 2))
    assert abs(joint - 1.0) < 1e-12
    np.testing.assert_allclose(grads["a"], [0.6, 0.0])


def test_clip_leaves_small_gradients():
    grads = {"a": np.array([0.3, 0.4])}
    clip_global_norm(grads, 5.0)
    np.testing.assert_array_equal(grads["a"], [0.3, 0.4])


def test_adam_object_updates_tensors():
    t = Tensor(np.array([1.0, 1.0]), requires_grad=True)
    t.grad = np.array([10.0, -10.0])
    opt = Adam(lr=0.5, clip_norm=5.0)
    norm = opt.step({"t": t})
    assert norm == np.sqrt(200.0)
    np.testing.assert_allclose(t.data, [0.5, 1.5], rtol=1e-6)
