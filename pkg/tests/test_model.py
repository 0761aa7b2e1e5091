import numpy as np
import pytest

from escnet import model
from escnet.errors import NumericalError
from escnet.model import Arch, ModelConfig, build, param_count
from escnet.nn import optim
from escnet.nn.layers import BatchNorm
from escnet.nn.optim import OptimizerState, Profile, lr_schedule, sgd_nesterov_step

EXPECTED_SHAPES = {
    "conv1": (128, 128, 32), "conv2": (128, 128, 32), "pool1": (32, 43, 32),
    "conv3": (32, 43, 64), "conv4": (32, 43, 64), "pool2": (8, 43, 64),
    "conv5": (8, 43, 128), "conv6": (8, 43, 128), "pool3": (8, 15, 128),
    "conv7": (8, 15, 256), "conv8": (8, 15, 256), "pool4": (4, 8, 256),
    "fc1": (512,), "fc2": (10,),
}


@pytest.fixture(scope="module")
def proposed():
    return build(ModelConfig(Arch.PROPOSED, 10), np.random.default_rng(0))


def test_symbolic_shapes(proposed):
    shapes = dict(proposed.shapes())
    for name, shape in EXPECTED_SHAPES.items():
        assert shapes[name] == shape, name
    assert shapes["flatten"] == (8192,)


def test_vgg_shapes():
    net = build(ModelConfig(Arch.VGG10, 10), np.random.default_rng(0))
    shapes = dict(net.shapes())
    assert shapes["pool4"] == (8, 8, 256)
    assert shapes["flatten"] == (16384,)
    assert shapes["fc2"] == (10,)


def test_runtime_shapes(proposed):
    x = np.random.default_rng(1).standard_normal((2, 128, 128, 2)).astype(np.float32)
    h = x
    seen = {}
    for layer in proposed.layers:
        h = layer.forward(h)
        seen[layer.name] = h.shape[1:]
    for name, shape in EXPECTED_SHAPES.items():
        assert seen[name] == shape


def _count_by_hand(arch, n_classes):
    kernels = model.PROPOSED_KERNELS if arch is Arch.PROPOSED else model.VGG_KERNELS
    cin, total = 2, 0
    for (kh, kw), f in zip(kernels, model.FILTERS):
        total += kh * kw * cin * f + f  # conv weights and bias
        total += 2 * f  # BN scale and shift
        cin = f
    flat = 4 * 8 * 256 if arch is Arch.PROPOSED else 8 * 8 * 256
    return total + flat * 512 + 512 + 512 * n_classes + n_classes


@pytest.mark.parametrize("arch", list(Arch))
@pytest.mark.parametrize("n", [2, 10, 50])
def test_param_count(arch, n):
    net = build(ModelConfig(arch, n), np.random.default_rng(0))
    assert net.num_params() == param_count(arch, n) == _count_by_hand(arch, n)


def test_param_count_value():
    assert param_count(Arch.PROPOSED, 10) == 5245578


def test_build_is_seeded():
    a = build(ModelConfig(), np.random.default_rng(5))
    b = build(ModelConfig(), np.random.default_rng(5))
    for la, lb in zip(a.layers, b.layers):
        for key in la.params:
            assert la.params[key].tobytes() == lb.params[key].tobytes()


def test_initialization(proposed):
    w = proposed.layer("fc1").params["W"]
    assert abs(w.std() - 0.05) < 0.001
    assert not proposed.layer("conv1").params["b"].any()
    assert np.all(proposed.layer("bn1").params["gamma"] == 1)


def test_model_config_invariants():
    with pytest.raises(ValueError):
        ModelConfig(n_classes=1)
    with pytest.raises(ValueError):
        ModelConfig(input_shape=(64, 64, 2))


def test_predict_proba_rows_sum_to_one(proposed):
    x = np.random.default_rng(2).standard_normal((3, 128, 128, 2)).astype(np.float32)
    p = model.predict_proba(proposed, x, batch_size=2)
    assert p.shape == (3, 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert model.extract_fc1(proposed, x).shape == (3, 512)


def test_nan_detection(proposed):
    x = np.full((1, 128, 128, 2), np.nan, dtype=np.float32)
    with pytest.raises(NumericalError):
        proposed.forward(x)


def test_bn_running_stats_seeded_then_ema():
    bn = BatchNorm(2, dtype=np.float64)
    x1 = np.array([[1.0, 2.0], [3.0, 6.0]])
    bn.forward(x1, train=True)
    np.testing.assert_allclose(bn.running_mean, [2, 4])
    np.testing.assert_allclose(bn.running_var, [1, 4])
    bn.forward(np.zeros((2, 2)), train=True)
    np.testing.assert_allclose(bn.running_mean, [0.99 * 2, 0.99 * 4])


def test_bn_recalibration_pools_chunks():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((12, 3)) * 2 + 5
    bn = BatchNorm(3, dtype=np.float64)
    bn.begin_recalibration()
    for i in range(0, 12, 4):
        bn.forward(x[i:i + 4], train=True)
    bn.end_recalibration()
    np.testing.assert_allclose(bn.running_mean, x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(bn.running_var, x.var(axis=0), atol=1e-12)


def test_lr_schedule():
    assert lr_schedule(0, Profile.URBAN) == 0.1
    assert lr_schedule(79, Profile.URBAN) == 0.1
    assert lr_schedule(80, Profile.URBAN) == pytest.approx(0.01)
    assert lr_schedule(160, Profile.URBAN) == pytest.approx(0.001)
    assert lr_schedule(199, Profile.URBAN) == pytest.approx(0.001)
    assert lr_schedule(99, Profile.ESC) == 0.1
    assert lr_schedule(100, Profile.ESC) == pytest.approx(0.01)
    assert lr_schedule(299, Profile.ESC) == pytest.approx(0.001)
    assert optim.TOTAL_EPOCHS[Profile.ESC] == 300


def test_nesterov_step_by_hand():
    p = np.array([1.0, -2.0])
    g = np.array([0.5, 0.5])
    state = OptimizerState(lr=0.1, momentum=0.9, l2=0.0)
    sgd_nesterov_step([p], [g], state)
    # v1 = -0.05; p1 = p0 + 0.9 * v1 - 0.1 * g
    np.testing.assert_allclose(p, [1 - 0.045 - 0.05, -2 - 0.045 - 0.05])
    sgd_nesterov_step([p], [g], state)
    v2 = 0.9 * -0.05 - 0.05
    np.testing.assert_allclose(p, [0.905 + 0.9 * v2 - 0.05, -2.095 + 0.9 * v2 - 0.05])


def test_l2_only_on_decayed_params():
    p = np.array([1.0])
    q = np.array([1.0])
    state = OptimizerState(lr=1.0, momentum=0.0, l2=0.1)
    sgd_nesterov_step([p, q], [np.zeros(1), np.zeros(1)], state, decay=[True, False])
    np.testing.assert_allclose(p, [0.9])
    np.testing.assert_allclose(q, [1.0])


def test_nesterov_minimizes_quadratic():
    p = np.array([5.0, -3.0])
    state = OptimizerState(lr=0.05, momentum=0.9, l2=0.0)
    for _ in range(300):
        sgd_nesterov_step([p], [2 * p], state)
    assert np.max(np.abs(p)) < 1e-6
