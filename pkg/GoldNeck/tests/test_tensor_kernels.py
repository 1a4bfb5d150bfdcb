import numpy as np
import pytest

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.tensor import kernels
from GoldNeck.tensor.core import BatchNormStats, ConvSpec, Tensor, set_num_threads, verification_precision
from GoldNeck.tests import oracles

ATOL = 1e-6


@pytest.fixture
def exact():
    """Almacenamiento float64 para comparar contra los oráculos sin redondeo a f32."""
    with verification_precision():
        yield


def _draw_conv(rng):
    groups = int(rng.choice([1, 2]))
    cin = groups * int(rng.integers(1, 4))
    cout = groups * int(rng.integers(1, 4))
    k = int(rng.choice([1, 2, 3]))
    stride = int(rng.choice([1, 2]))
    padding = int(rng.integers(0, 2))
    h = int(rng.integers(k, 9))
    # tamaño de salida entero
    while (h + 2 * padding - k) % stride:
        h += 1
    x = rng.standard_normal((int(rng.integers(1, 3)), cin, h, h))
    w = rng.standard_normal((cout, cin // groups, k, k))
    b = rng.standard_normal(cout) if rng.random() < 0.5 else None
    return x, ConvSpec(cin, cout, (k, k), w, b, stride, padding, groups)


# ============================================================================
# CONV2D
# ============================================================================

def test_conv2d_identity_kernel():
    x = Tensor(np.full((1, 1, 3, 3), 2.0))
    spec = ConvSpec(1, 1, (1, 1), np.ones((1, 1, 1, 1)))
    assert np.array_equal(kernels.conv2d(x, spec).data, np.full((1, 1, 3, 3), 2.0, dtype=np.float32))


def test_conv2d_matches_oracle_stride2_pad1(exact, rng):
    x = rng.standard_normal((2, 4, 5, 5))
    w = rng.standard_normal((6, 4, 3, 3))
    out = kernels.conv2d(Tensor(x), ConvSpec(4, 6, (3, 3), w, stride=2, padding=1))
    expected = oracles.conv2d(x, w, stride=2, padding=1)
    assert out.dims == (2, 6, 3, 3)
    np.testing.assert_allclose(out.data, expected, atol=ATOL, rtol=0)


def test_conv2d_randomized_against_oracle(exact):
    rng = np.random.default_rng(7)
    for _ in range(40):
        x, spec = _draw_conv(rng)
        out = kernels.conv2d(Tensor(x), spec)
        expected = oracles.conv2d(x, spec.weight, spec.bias, spec.stride, spec.padding, spec.groups)
        np.testing.assert_allclose(out.data, expected, atol=ATOL, rtol=0)


def test_conv2d_depthwise_against_oracle(exact, rng):
    x = rng.standard_normal((1, 5, 6, 6))
    w = rng.standard_normal((5, 1, 3, 3))
    out = kernels.conv2d(Tensor(x), ConvSpec(5, 5, (3, 3), w, padding=1, groups=5))
    np.testing.assert_allclose(out.data, oracles.conv2d(x, w, padding=1, groups=5), atol=ATOL, rtol=0)


def test_conv2d_channel_mismatch_rejected(rng):
    spec = ConvSpec(3, 2, (1, 1), rng.standard_normal((2, 3, 1, 1)))
    with pytest.raises(ConfigurationError, match="in_channels"):
        kernels.conv2d(Tensor(rng.standard_normal((1, 4, 2, 2))), spec)


def test_conv2d_non_integer_output_rejected(rng):
    spec = ConvSpec(1, 1, (2, 2), rng.standard_normal((1, 1, 2, 2)), stride=2)
    with pytest.raises(ConfigurationError, match="no entero"):
        kernels.conv2d(Tensor(rng.standard_normal((1, 1, 5, 5))), spec)


def test_conv2d_bitwise_identical_across_threads(rng):
    x = Tensor(rng.standard_normal((1, 8, 6, 6)))
    spec = ConvSpec(8, 80, (3, 3), rng.standard_normal((80, 8, 3, 3)), padding=1)
    single = kernels.conv2d(x, spec)
    try:
        set_num_threads(3)
        threaded = kernels.conv2d(x, spec)
    finally:
        set_num_threads(1)
    assert single.data.tobytes() == threaded.data.tobytes()


def test_conv_spec_rejects_wrong_weight_shape(rng):
    with pytest.raises(ConfigurationError, match="weight"):
        ConvSpec(4, 2, (3, 3), rng.standard_normal((2, 4, 1, 1)))


def test_tensor_requires_rank4():
    with pytest.raises(ConfigurationError, match="rank 4"):
        Tensor(np.zeros((2, 2)))


def test_tensor_default_storage_is_float32(rng):
    assert Tensor(rng.standard_normal((1, 1, 2, 2))).data.dtype == np.float32


# ============================================================================
# BATCHNORM Y ACTIVACIONES
# ============================================================================

def test_batchnorm_identity_stats(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    ones, zeros = np.ones(3), np.zeros(3)
    out = kernels.batchnorm(Tensor(x), BatchNormStats(ones, zeros, zeros, ones, 1e-5))
    np.testing.assert_allclose(out.data, x, rtol=1e-4, atol=1e-6)


def test_batchnorm_random_stats_against_oracle(exact, rng):
    x = rng.standard_normal((2, 4, 3, 5))
    gamma, beta, mean = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(4)
    var = rng.uniform(0.1, 2.0, 4)
    out = kernels.batchnorm_infer(Tensor(x), gamma, beta, mean, var, 1e-5)
    np.testing.assert_allclose(out.data, oracles.batchnorm(x, gamma, beta, mean, var, 1e-5), atol=ATOL, rtol=0)


def test_batchnorm_rejects_negative_variance(rng):
    ones, zeros = np.ones(2), np.zeros(2)
    with pytest.raises(ConfigurationError, match="var"):
        kernels.batchnorm_infer(Tensor(rng.standard_normal((1, 2, 2, 2))), ones, zeros, zeros, -ones, 1e-5)


def test_batchnorm_rejects_wrong_vector_length(rng):
    with pytest.raises(ConfigurationError, match="gamma"):
        kernels.batchnorm_infer(Tensor(rng.standard_normal((1, 2, 2, 2))), np.ones(3), np.zeros(2),
                                np.zeros(2), np.ones(2), 1e-5)


def test_relu_and_sigmoid_against_scalar_formula(exact):
    values = np.array([-20.0, -1.5, 0.0, 0.3, 20.0]).reshape(1, 1, 1, 5)
    relu = kernels.activation(Tensor(values), "relu").data.reshape(-1)
    sig = kernels.activation(Tensor(values), "sigmoid").data.reshape(-1)
    np.testing.assert_array_equal(relu, [0.0, 0.0, 0.0, 0.3, 20.0])
    np.testing.assert_allclose(sig, [oracles.sigmoid(v) for v in values.reshape(-1)], atol=1e-7, rtol=0)
    assert np.all((sig > 0.0) & (sig < 1.0))
    assert np.all(np.diff(sig) > 0)


def test_sigmoid_stays_open_in_float32():
    sig = kernels.activation(Tensor(np.array([-200.0, 200.0]).reshape(1, 1, 1, 2)), "sigmoid").data
    assert np.all((sig > 0.0) & (sig < 1.0))


def test_unknown_activation_rejected(rng):
    with pytest.raises(ConfigurationError, match="gelu"):
        kernels.activation(Tensor(rng.standard_normal((1, 1, 1, 1))), "gelu")


# ============================================================================
# REDIMENSIONADO
# ============================================================================

def test_avgpool_same_size_is_bitwise_identity(rng):
    x = Tensor(rng.standard_normal((1, 2, 5, 7)))
    assert kernels.avgpool_to(x, (5, 7)).data.tobytes() == x.data.tobytes()


def test_avgpool_randomized_against_oracle(exact):
    rng = np.random.default_rng(21)
    for _ in range(30):
        h, w = (int(v) for v in rng.integers(1, 10, 2))
        th, tw = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
        x = rng.standard_normal((int(rng.integers(1, 3)), int(rng.integers(1, 4)), h, w))
        out = kernels.avgpool_to(Tensor(x), (th, tw))
        np.testing.assert_allclose(out.data, oracles.avgpool(x, th, tw), atol=ATOL, rtol=0)


def test_avgpool_rejects_upsampling(rng):
    with pytest.raises(ConfigurationError, match="bilinear"):
        kernels.avgpool_to(Tensor(rng.standard_normal((1, 1, 2, 2))), (4, 4))


def test_bilinear_half_pixel_example():
    x = Tensor(np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2))
    out = kernels.bilinear_resize(x, (4, 4)).data[0, 0]
    np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0], atol=ATOL)
    np.testing.assert_allclose(out[3], [2.0, 2.25, 2.75, 3.0], atol=ATOL)
    np.testing.assert_allclose(out, oracles.bilinear(x.data.astype(np.float64), 4, 4)[0, 0], atol=ATOL)


def test_bilinear_randomized_against_oracle(exact):
    rng = np.random.default_rng(22)
    for _ in range(30):
        h, w = (int(v) for v in rng.integers(1, 6, 2))
        th, tw = (int(v) for v in rng.integers(1, 10, 2))
        x = rng.standard_normal((1, int(rng.integers(1, 4)), h, w))
        out = kernels.bilinear_resize(Tensor(x), (th, tw))
        np.testing.assert_allclose(out.data, oracles.bilinear(x, th, tw), atol=ATOL, rtol=0)


def test_resize_to_picks_pool_or_bilinear(exact, rng):
    x = rng.standard_normal((1, 2, 4, 4))
    np.testing.assert_allclose(kernels.resize_to(Tensor(x), (2, 2)).data, oracles.avgpool(x, 2, 2), atol=ATOL)
    np.testing.assert_allclose(kernels.resize_to(Tensor(x), (8, 8)).data, oracles.bilinear(x, 8, 8), atol=ATOL)


# ============================================================================
# CANALES Y ATENCIÓN
# ============================================================================

def test_split_of_concat_is_bitwise(rng):
    a, b = Tensor(rng.standard_normal((2, 3, 4, 4))), Tensor(rng.standard_normal((2, 5, 4, 4)))
    left, right = kernels.split_channels(kernels.concat_channels([a, b]), [3, 5])
    assert left.data.tobytes() == a.data.tobytes()
    assert right.data.tobytes() == b.data.tobytes()


def test_concat_of_split_is_bitwise(rng):
    x = Tensor(rng.standard_normal((1, 7, 3, 3)))
    parts = kernels.split_channels(x, [2, 4, 1])
    assert kernels.concat_channels(parts).data.tobytes() == x.data.tobytes()


def test_split_sizes_must_sum_to_channels(rng):
    with pytest.raises(ConfigurationError):
        kernels.split_channels(Tensor(rng.standard_normal((1, 4, 2, 2))), [1, 2])


def test_concat_rejects_spatial_mismatch(rng):
    with pytest.raises(ConfigurationError):
        kernels.concat_channels([Tensor(rng.standard_normal((1, 1, 2, 2))),
                                 Tensor(rng.standard_normal((1, 1, 3, 3)))])


def test_matmul_identity(rng):
    m = rng.standard_normal((1, 1, 2, 2))
    eye = np.eye(2).reshape(1, 1, 2, 2)
    np.testing.assert_allclose(kernels.matmul_batched(Tensor(eye), Tensor(m)).data, m.astype(np.float32))


def test_matmul_against_oracle(exact, rng):
    a, b = rng.standard_normal((2, 3, 3, 4)), rng.standard_normal((2, 3, 4, 5))
    np.testing.assert_allclose(kernels.matmul_batched(Tensor(a), Tensor(b)).data, oracles.matmul(a, b),
                               atol=ATOL, rtol=0)


def test_matmul_rejects_inner_mismatch(rng):
    with pytest.raises(ConfigurationError):
        kernels.matmul_batched(Tensor(rng.standard_normal((1, 1, 2, 3))), Tensor(rng.standard_normal((1, 1, 2, 3))))


def test_softmax_is_stable_for_large_logits():
    out = kernels.softmax_lastdim(Tensor(np.array([1000.0, 0.0]).reshape(1, 1, 1, 2))).data.reshape(-1)
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(1.0, abs=1e-6)


def test_softmax_against_oracle_and_rows_sum_to_one(exact, rng):
    x = rng.standard_normal((2, 3, 4, 6)) * 5
    out = kernels.softmax_lastdim(Tensor(x)).data
    np.testing.assert_allclose(out, oracles.softmax(x), atol=ATOL, rtol=0)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


def test_elementwise_dims_must_match(rng):
    with pytest.raises(ConfigurationError, match="add"):
        kernels.add(Tensor(rng.standard_normal((1, 1, 2, 2))), Tensor(rng.standard_normal((1, 2, 2, 2))))


def test_losses_match_scalar_formulas(exact):
    z = np.array([-2.0, 0.5, 3.0, 0.0]).reshape(1, 1, 2, 2)
    t = np.array([0.0, 1.0, 1.0, 0.0]).reshape(1, 1, 2, 2)
    bce = kernels.bce_with_logits_mean(Tensor(z), Tensor(t)).data.reshape(-1)[0]
    expected = np.mean([-(tv * np.log(oracles.sigmoid(zv)) + (1 - tv) * np.log(1 - oracles.sigmoid(zv)))
                        for zv, tv in zip(z.reshape(-1), t.reshape(-1))])
    assert bce == pytest.approx(expected, abs=1e-9)

    mask = np.array([1.0, 0.0, 1.0, 0.0]).reshape(1, 1, 2, 2)
    l1 = kernels.masked_l1_mean(Tensor(z), Tensor(t), Tensor(mask)).data.reshape(-1)[0]
    assert l1 == pytest.approx((2.0 + 2.0) / 2.0)
