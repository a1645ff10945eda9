import numpy as np
import pytest

from transitbench.data import HORIZON, LOOKBACK, WindowBatch
from transitbench.errors import ModelError
from transitbench.neural import checkpoint as ckpt
from transitbench.neural import autodiff as ad
from transitbench.neural.network import Network, NetworkSpec
from transitbench.neural.training import TrainConfig, backward, fine_tune, train

FAMS = ("MLP", "CNN", "LSTM")


def batch(rng, n, stations=1, fw=42):
    return rng.random((n, stations, LOOKBACK)), rng.random((n, fw))


def windows(lookback, feats, target):
    n = len(lookback)
    return WindowBatch(np.arange(n), lookback, feats.reshape(n, 7, -1), target)


# ----------------------------------------------------------------- structure

def test_mlp_hidden_size_example():
    spec = NetworkSpec("MLP", feature_width=6)
    assert spec.input_width == 27 and spec.output_width == 7
    assert spec.mlp_hidden == 17
    assert NetworkSpec("MLP", feature_width=7).mlp_hidden == 18  # 17.5 rounds up


def _hand_count(spec):
    """Parameter count by walking the architecture layer by layer."""
    S, T, F, O = spec.stations_in, spec.lookback, spec.feature_width, spec.output_width
    if spec.family == "MLP":
        i = S * T + F
        h = (i + O + 1) // 2
        return (i + 1) * h + (h + 1) * O
    if spec.family == "CNN":
        pos = T - 7
        return 256 * (2 * S + 1) + (256 * pos + F + 1) * O
    u = 32
    return 4 * u * (S + u + 1) + (u + F + 1) * O


@pytest.mark.parametrize("family", FAMS)
@pytest.mark.parametrize("stations", [1, 3, 20])
def test_parameter_counts(family, stations):
    spec = NetworkSpec(family, stations_in=stations, stations_out=stations)
    net = Network(spec, 0)
    assert net.param_count() == spec.expected_param_count() == _hand_count(spec)


@pytest.mark.parametrize("family", FAMS)
def test_zero_parameters_give_zero_output(family):
    net = Network(NetworkSpec(family), 1)
    net.set_flat(np.zeros(net.param_count()))
    lb, f = batch(np.random.default_rng(0), 4)
    assert np.array_equal(net.predict(lb, f), np.zeros((4, 1, 7)))


@pytest.mark.parametrize("family", FAMS)
def test_forward_is_pure_and_seeded(family):
    rng = np.random.default_rng(2)
    lb, f = batch(rng, 5, 2)
    spec = NetworkSpec(family, stations_in=2, stations_out=2)
    a, b = Network(spec, 7), Network(spec, 7)
    out = a.predict(lb, f)
    assert np.array_equal(out, a.predict(lb, f))
    assert np.array_equal(out, b.predict(lb, f))
    assert out.shape == (5, 2, 7)


def test_shape_errors_name_layer():
    net = Network(NetworkSpec("CNN"), 0)
    lb, f = batch(np.random.default_rng(0), 2, stations=2)
    with pytest.raises(ValueError, match="input layer"):
        net.predict(lb, f)
    with pytest.raises(ValueError, match="input layer"):
        net.predict(lb[:, :1], f[:, :10])
    with pytest.raises(ValueError, match="layer conv"):
        net.layers[0](ad.Tensor(np.ones((1, 3, 21))))


def test_cnn_causality_by_perturbation():
    """Each conv position j sees exactly input days j and j+7 (t and t-7)."""
    spec = NetworkSpec("CNN", stations_in=2, stations_out=2)
    net = Network(spec, 3)
    conv = net.layers[0]
    x = np.random.default_rng(4).standard_normal((1, 2, LOOKBACK))
    base = conv(ad.Tensor(x)).data
    for day in range(LOOKBACK):
        for ch in range(2):
            xp = x.copy()
            xp[0, ch, day] += 1.0
            changed = np.flatnonzero(np.any(conv(ad.Tensor(xp)).data != base, axis=(0, 1)))
            expect = {day, day - 7} & set(range(spec.cnn_positions))
            assert set(changed.tolist()) == expect


def test_lstm_state_is_reset_between_calls():
    net = Network(NetworkSpec("LSTM", stations_in=3, stations_out=3), 5)
    lstm = net.layers[0]
    seq = np.random.default_rng(6).standard_normal((2, LOOKBACK, 3))
    assert np.array_equal(lstm.run(seq).data, lstm.run(seq).data)


@pytest.mark.parametrize("family", FAMS)
def test_whole_network_gradients(family):
    import gradcheck
    rng = np.random.default_rng(8)
    spec = NetworkSpec(family, stations_in=2, stations_out=2, cnn_filters=8, lstm_units=5)
    net = Network(spec, 9)
    lb, f = batch(rng, 3, 2)
    target = rng.random((3, 14))
    loss = lambda: ad.mse(net.forward(lb, f), target)  # noqa: E731
    assert gradcheck.check(list(net.parameters().values()), loss, rng) < 1e-4


def test_backward_zero_at_perfect_fit():
    net = Network(NetworkSpec("MLP"), 0)
    lb, f = batch(np.random.default_rng(1), 3)
    pred = net.forward(lb, f).data
    assert backward(net, lb, f, pred) == 0.0
    assert all(np.all(p.grad == 0) for p in net.parameters().values())


# ------------------------------------------------------------------ training

def test_zero_learning_rate_changes_nothing():
    rng = np.random.default_rng(2)
    lb, f = batch(rng, 40)
    w = windows(lb, f, rng.random((40, 1, 7)))
    net = Network(NetworkSpec("MLP"), 0)
    before = net.get_flat()
    res = train(net, w, TrainConfig(epochs=3, learning_rate=0.0))
    assert np.array_equal(net.get_flat(), before)
    # only the batch order moves between epochs, so the trace is flat up to summation order
    assert np.allclose(res.loss_trace, res.loss_trace[0], rtol=1e-12, atol=0)


def test_mlp_learns_noiseless_linear_task():
    rng = np.random.default_rng(3)
    n = 256
    lb, f = batch(rng, n)
    coef = rng.standard_normal((21 + 42, 7)) * 0.1
    target = (np.concatenate([lb.reshape(n, -1), f], axis=1) @ coef).reshape(n, 1, 7)
    net = Network(NetworkSpec("MLP"), 1)
    res = train(net, windows(lb, f, target), TrainConfig(epochs=200, learning_rate=1e-3))
    assert res.loss_trace[-1] < 1e-3


@pytest.mark.parametrize("family", FAMS)
def test_training_is_deterministic(family):
    rng = np.random.default_rng(4)
    lb, f = batch(rng, 50)
    w = windows(lb, f, rng.random((50, 1, 7)))
    traces = []
    for _ in range(2):
        net = Network(NetworkSpec(family), 2)
        traces.append((train(net, w, TrainConfig(epochs=2, seed=5)).loss_trace, net.checksum()))
    assert traces[0] == traces[1]


def test_nan_loss_aborts_with_diagnostic():
    rng = np.random.default_rng(5)
    lb, f = batch(rng, 10)
    w = windows(lb, f, np.full((10, 1, 7), np.nan))
    with pytest.raises(ModelError, match=r"epoch 1 \(learning rate 0.001\)"):
        train(Network(NetworkSpec("MLP"), 0), w, TrainConfig(epochs=1))


def test_sgd_optimizer_trains():
    rng = np.random.default_rng(6)
    lb, f = batch(rng, 64)
    w = windows(lb, f, np.full((64, 1, 7), 0.5))
    res = train(Network(NetworkSpec("MLP"), 0), w,
                TrainConfig(epochs=20, optimizer="sgd", learning_rate=0.01))
    assert res.loss_trace[-1] < 0.1 * res.loss_trace[0]


def test_fine_tune_zero_epochs_is_identity():
    rng = np.random.default_rng(7)
    lb, f = batch(rng, 10)
    net = Network(NetworkSpec("LSTM"), 0)
    before = net.checksum()
    fine_tune(net, windows(lb, f, rng.random((10, 1, 7))), TrainConfig(epochs=0))
    assert net.checksum() == before


def _level_task(rng, n, level):
    """Target = level * (mean of the last lookback week), so a level shift is learnable."""
    lb = level * (0.5 + 0.1 * rng.standard_normal((n, 1, LOOKBACK)))
    f = np.zeros((n, 42))
    target = np.repeat(lb[:, :, -7:].mean(axis=2, keepdims=True), 7, axis=2)
    return lb, f, target


def test_fine_tune_adapts_after_level_shift():
    rng = np.random.default_rng(8)
    lb, f, t = _level_task(rng, 300, 1.0)
    net = Network(NetworkSpec("MLP"), 0)
    res = train(net, windows(lb, f, t), TrainConfig(epochs=30))
    frozen = net.copy()
    opt = res.optimizer
    lb2, f2, t2 = _level_task(rng, 120, 0.4)
    # bias the new regime: targets sit 30% below the usual ratio
    t2 = t2 * 0.7
    for day in range(30):
        recent = slice(max(0, day * 3 - 90), day * 3 + 30)
        fine_tune(net, windows(lb2[recent], f2[recent], t2[recent]), TrainConfig(), opt, (day,))
    test = slice(90, 120)
    mse = lambda m: float(np.mean((m.forward(lb2[test], f2[test]).data - t2[test].reshape(30, -1)) ** 2))  # noqa: E731
    assert mse(net) <= 0.5 * mse(frozen)


def test_fine_tune_same_distribution_is_stable():
    rng = np.random.default_rng(9)
    lb, f, t = _level_task(rng, 400, 1.0)
    net = Network(NetworkSpec("LSTM"), 1)
    res = train(net, windows(lb[:300], f[:300], t[:300]), TrainConfig(epochs=20))
    held = windows(lb[300:], f[300:], t[300:])
    before = backward(net, held.lookback, held.flat_features, held.target.reshape(100, -1))
    for day in range(30):
        fine_tune(net, windows(lb[day:day + 90], f[day:day + 90], t[day:day + 90]),
                  TrainConfig(), res.optimizer, (day,))
    after = backward(net, held.lookback, held.flat_features, held.target.reshape(100, -1))
    assert after <= 1.1 * before


# ---------------------------------------------------------------- checkpoint

@pytest.mark.parametrize("family", FAMS)
def test_checkpoint_round_trip_is_bit_exact(tmp_path, family):
    rng = np.random.default_rng(10)
    lb, f = batch(rng, 20, 2)
    spec = NetworkSpec(family, stations_in=2, stations_out=2)
    net = Network(spec, 3)
    res = train(net, windows(lb, f, rng.random((20, 2, 7))), TrainConfig(epochs=1))
    arrays = {**ckpt.network_arrays(net), **res.optimizer.state_arrays()}
    ckpt.save(tmp_path / "m.bin", arrays)
    loaded = ckpt.load(tmp_path / "m.bin")
    assert list(loaded) == list(arrays)
    for k in arrays:
        assert loaded[k].tobytes() == np.asarray(arrays[k], dtype="<f8").tobytes()
    other = Network(spec, 99)
    ckpt.load_into(other, loaded)
    assert other.checksum() == net.checksum()
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"TBCK"


def test_checkpoint_rejects_garbage():
    from transitbench.errors import DataError
    with pytest.raises(DataError):
        ckpt.loads(b"nope")
    blob = ckpt.dumps({"a": np.ones(3)})
    with pytest.raises(DataError, match="truncated"):
        ckpt.loads(blob[:-4])
