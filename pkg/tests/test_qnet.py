import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blendmpc.qnet import AdamState, QNetwork, ReplayBuffer, adam_step, load_checkpoint, save_checkpoint


def finite_difference_error(net, obs, act, y, h=1e-6):
    _, grads = net.loss_and_grad(obs, act, y)
    worst = 0.0
    for p, g in zip(net.params, grads):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = net.loss_and_grad(obs, act, y)
            p[idx] = old - h
            down, _ = net.loss_and_grad(obs, act, y)
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(num), np.linalg.norm(g), 1e-8)
        worst = max(worst, np.linalg.norm(num - g) / denom)
    return worst


@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [3, int(rng.integers(1, 6)), int(rng.integers(1, 6)), 1]
    net = QNetwork(sizes, rng)
    obs, act, y = rng.normal(size=(4, 2)), rng.normal(size=4), rng.normal(size=4)
    assert finite_difference_error(net, obs, act, y) < 1e-4


def test_forward_shapes():
    net = QNetwork([5, 8, 1], np.random.default_rng(0))
    assert isinstance(net(np.zeros(4), 0.5), float)
    assert net(np.zeros((3, 4)), np.zeros(3)).shape == (3,)
    assert net(np.zeros((3, 4)), np.zeros((3, 1))).shape == (3,)
    with pytest.raises(ValueError):
        net(np.zeros(3), 0.5)


def test_initialisation_bounds():
    net = QNetwork([5, 100, 100, 1], np.random.default_rng(0))
    assert np.abs(net.params[0]).max() <= 1 / np.sqrt(5)
    assert np.abs(net.params[2]).max() <= 1 / np.sqrt(100)
    zero = QNetwork([5, 4, 1], zero=True)
    assert zero(np.ones(4), 1.0) == 0.0


def test_bad_sizes():
    with pytest.raises(ValueError):
        QNetwork([5, 3, 2], np.random.default_rng(0))


def test_frozen_snapshot_is_isolated_and_close():
    rng = np.random.default_rng(1)
    net = QNetwork([5, 16, 16, 1], rng)
    obs, act = rng.normal(size=(10, 4)), rng.normal(size=(10, 1))
    f64 = net.frozen(np.float64)
    f32 = net.frozen()
    np.testing.assert_allclose(f64(obs, act), net(obs, act), rtol=1e-12)
    np.testing.assert_allclose(f32(obs, act), net(obs, act), rtol=1e-4, atol=1e-5)
    before = f64(obs, act)
    net.params[-1] += 1.0
    np.testing.assert_array_equal(f64(obs, act), before)


def test_adam_first_step_moves_by_learning_rate():
    net = QNetwork([2, 1], zero=True)
    state = AdamState.for_network(net, learning_rate=0.1)
    adam_step(net, state, [np.array([[1.0], [-2.0]]), np.array([0.5])])
    np.testing.assert_allclose(net.params[0], [[-0.1], [0.1]], atol=1e-6)
    np.testing.assert_allclose(net.params[1], [-0.1], atol=1e-6)
    assert state.step == 1


def test_adam_rejects_mismatched_gradients():
    net = QNetwork([2, 1], zero=True)
    with pytest.raises(ValueError):
        adam_step(net, AdamState.for_network(net), [np.zeros((1, 1)), np.zeros(1)])


def test_training_fits_a_linear_target():
    rng = np.random.default_rng(0)
    net = QNetwork([3, 32, 1], rng)
    state = AdamState.for_network(net, learning_rate=1e-2)
    obs, act = rng.normal(size=(256, 2)), rng.normal(size=256)
    y = obs @ [1.0, -2.0] + 0.5 * act
    first, _ = net.loss_and_grad(obs, act, y)
    for _ in range(500):
        _, g = net.loss_and_grad(obs, act, y)
        adam_step(net, state, g)
    last, _ = net.loss_and_grad(obs, act, y)
    assert last < 0.02 * first


def test_replay_buffer_fifo():
    buf = ReplayBuffer(3, 2, 1)
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))
    for i in range(5):
        buf.push([i, i], [i], float(i))
    assert len(buf) == 3
    _, _, y = buf.ordered()
    np.testing.assert_array_equal(y, [2.0, 3.0, 4.0])
    obs, act, y = buf.sample(50, np.random.default_rng(0))
    assert set(y) <= {2.0, 3.0, 4.0}
    assert obs.shape == (50, 2) and act.shape == (50, 1)


def test_checkpoint_round_trip(tmp_path):
    net = QNetwork([5, 7, 3, 1], np.random.default_rng(2))
    path = tmp_path / "q.bin"
    save_checkpoint(net, path, {"seed": 3})
    loaded, meta = load_checkpoint(path)
    assert loaded.sizes == net.sizes and meta == {"seed": 3}
    for a, b in zip(net.params, loaded.params):
        np.testing.assert_array_equal(a, b)
    raw = path.read_bytes()
    assert raw[:4] == b"QNET"
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_checkpoint(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(ValueError):
        load_checkpoint(path)
