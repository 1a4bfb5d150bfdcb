import numpy as np
import pytest

from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.graph import EAGER
from GoldNeck.neck.toy import (
    OUTPUT_STRIDES,
    class_brightness,
    make_square_dataset,
    toy_backbone,
    toy_detect_head,
    toy_input_dims,
    toy_loss_graph,
)
from GoldNeck.neck.trainer import clip_factor, step_zero_gradcheck, toy_train
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.params import ParamStore, as_view, init_params
from GoldNeck.settings import GRADCHECK_TOLERANCE
from GoldNeck.tensor.core import Tensor
from GoldNeck.tests.conftest import micro_config


def backbone_store(cfg, size):
    return init_params(lambda ops, x, p: toy_backbone(x, p, cfg, ops=ops), (1, 3, size, size), seed=0)


# ============================================================================
# BACKBONE Y CABEZA
# ============================================================================

def test_backbone_produces_strides_4_to_32(rng):
    cfg = micro_config()
    pyramid = toy_backbone(Tensor(rng.random((1, 3, 64, 64))), backbone_store(cfg, 64), cfg)
    assert pyramid.names == ["B2", "B3", "B4", "B5"]
    assert pyramid.dims() == {"B2": (1, 4, 16, 16), "B3": (1, 8, 8, 8), "B4": (1, 8, 4, 4), "B5": (1, 16, 2, 2)}


def test_constant_image_gives_spatially_constant_features():
    cfg = micro_config()
    image = Tensor(np.full((1, 3, 64, 64), 0.7))
    for _, value in toy_backbone(image, backbone_store(cfg, 64), cfg):
        data = value.data
        np.testing.assert_allclose(data, np.broadcast_to(data[:, :, :1, :1], data.shape), rtol=1e-6)


def test_backbone_rejects_sizes_not_divisible_by_32(rng):
    cfg = micro_config()
    with pytest.raises(ConfigurationError, match="32"):
        toy_backbone(Tensor(rng.random((1, 3, 48, 64))), backbone_store(cfg, 64), cfg)


def test_backbone_rejects_non_rgb_input(rng):
    cfg = micro_config()
    with pytest.raises(ConfigurationError, match="canales"):
        toy_backbone(Tensor(rng.random((1, 1, 64, 64))), backbone_store(cfg, 64), cfg)


@pytest.mark.parametrize("num_classes", [2, 4])
def test_head_output_channels(rng, num_classes):
    pyramid = FeaturePyramid([("N3", Tensor(rng.standard_normal((2, 8, 4, 4)))),
                              ("N4", Tensor(rng.standard_normal((2, 8, 2, 2))))])
    store = init_params(lambda ops, p, prm: toy_detect_head(p, prm, num_classes, ops=ops), pyramid, seed=0)
    out = toy_detect_head(pyramid, store, num_classes)
    assert out.names == ["N3", "N4"]
    cls, reg = out["N3"]
    assert cls.dims == (2, num_classes, 4, 4)
    assert reg.dims == (2, 4, 4, 4)


def test_head_with_zero_weights_gives_zero_logits(rng):
    pyramid = FeaturePyramid([("N3", Tensor(rng.standard_normal((1, 8, 4, 4))))])
    store = init_params(lambda ops, p, prm: toy_detect_head(p, prm, 2, ops=ops), pyramid, seed=0)
    for name in store:
        store[name] = np.zeros_like(store[name])
    cls, reg = toy_detect_head(pyramid, store, 2)["N3"]
    assert not np.any(cls.data) and not np.any(reg.data)


def test_head_rejects_zero_classes(rng):
    pyramid = FeaturePyramid([("N3", Tensor(rng.standard_normal((1, 8, 4, 4))))])
    with pytest.raises(ConfigurationError, match="num_classes"):
        toy_detect_head(pyramid, ParamStore(), 0)


# ============================================================================
# SET SINTÉTICO
# ============================================================================

def test_square_dataset_has_one_positive_cell_per_level():
    data = make_square_dataset(count=6, image_size=64, num_classes=3, seed=4)
    assert data.images.shape == (6, 3, 64, 64)
    for level, stride in OUTPUT_STRIDES.items():
        t = data.targets[level]
        cells = 64 // stride
        assert t["cls"].shape == (6, 3, cells, cells)
        np.testing.assert_array_equal(t["cls"].sum(axis=(1, 2, 3)), np.ones(6))
        np.testing.assert_array_equal(t["mask"].sum(axis=(1, 2, 3)), np.full(6, 4.0))
        for i, label in enumerate(data.labels):
            assert t["cls"][i, label].sum() == 1.0


def test_square_dataset_brightness_encodes_class():
    data = make_square_dataset(count=5, image_size=32, num_classes=2, seed=1)
    for i, label in enumerate(data.labels):
        assert np.isclose(data.images[i].max(), class_brightness(int(label), 2))


def test_square_dataset_is_seeded():
    a = make_square_dataset(count=3, seed=9)
    b = make_square_dataset(count=3, seed=9)
    assert a.images.tobytes() == b.images.tobytes()
    assert np.array_equal(a.boxes, b.boxes)


def test_square_dataset_rejects_bad_size():
    with pytest.raises(ConfigurationError, match="múltiplo de 32"):
        make_square_dataset(image_size=40)


def test_loss_graph_is_a_finite_scalar():
    cfg = micro_config()
    data = make_square_dataset(count=2, image_size=32, seed=0)
    store = init_params(toy_loss_graph(cfg), toy_input_dims(cfg, 32, 2), seed=0)
    loss = toy_loss_graph(cfg)(EAGER, data.batch(), as_view(store))
    assert loss.dims == (1, 1, 1, 1)
    assert np.all(np.isfinite(loss.data)) and float(loss.data.reshape(-1)[0]) > 0.0


# ============================================================================
# ENTRENAMIENTO
# ============================================================================

def test_zero_learning_rate_gives_flat_curve():
    cfg = micro_config()
    data = make_square_dataset(count=2, image_size=32, seed=0)
    result = toy_train(cfg, data, steps=3, lr=0.0, seed=0)
    assert len(result.losses) == 3
    assert result.losses[0] == result.losses[1] == result.losses[2]


def test_same_seed_same_curve_and_weights():
    cfg = micro_config()
    data = make_square_dataset(count=4, image_size=32, seed=2)
    first = toy_train(cfg, data, steps=3, lr=0.01, seed=5, batch_size=2)
    second = toy_train(cfg, data, steps=3, lr=0.01, seed=5, batch_size=2)
    assert first.losses == second.losses
    assert first.store.equals(second.store)


def test_training_moves_trainable_params_but_not_running_stats():
    cfg = micro_config()
    data = make_square_dataset(count=2, image_size=32, seed=0)
    initial = init_params(toy_loss_graph(cfg), toy_input_dims(cfg, 32, 2), seed=0)
    result = toy_train(cfg, data, steps=2, lr=0.01, seed=0, params=initial)
    frozen = [n for n in initial if n.endswith(("running_mean", "running_var"))]
    assert frozen
    assert all(np.array_equal(initial[n], result.store[n]) for n in frozen)
    assert not initial.equals(result.store)


def test_records_have_one_row_per_step():
    cfg = micro_config()
    data = make_square_dataset(count=2, image_size=32, seed=0)
    result = toy_train(cfg, data, steps=2, lr=0.01, seed=0)
    records = result.records()
    assert [r["step"] for r in records] == [0, 1]
    assert records[0]["loss"] == result.initial_loss


@pytest.mark.parametrize("kwargs, key", [
    (dict(batch_size=0), "train.batch_size"),
    (dict(batch_size=10), "train.batch_size"),
    (dict(steps=0), "train.steps"),
    (dict(lr=-1.0), "train.lr"),
    (dict(momentum=1.0), "train.momentum"),
])
def test_invalid_training_arguments_name_their_key(kwargs, key):
    data = make_square_dataset(count=2, image_size=32, seed=0)
    with pytest.raises(ConfigurationError) as exc:
        toy_train(micro_config(), data, **kwargs)
    assert exc.value.key == key


def test_divergent_training_reports_the_step():
    data = make_square_dataset(count=2, image_size=32, seed=0)
    with pytest.raises(NumericalError) as exc:
        toy_train(micro_config(), data, steps=10, lr=1e30, clip=None, seed=0)
    assert exc.value.step is not None and exc.value.step >= 1


def test_clip_factor():
    assert clip_factor(5.0, None) == 1.0
    assert clip_factor(5.0, 10.0) == 1.0
    assert clip_factor(20.0, 10.0) == 0.5


def test_step_zero_gradcheck_within_tolerance():
    data = make_square_dataset(count=2, image_size=32, seed=0)
    assert step_zero_gradcheck(micro_config(), data, seed=0, probes=32) <= GRADCHECK_TOLERANCE


@pytest.mark.slow
def test_toy_training_halves_the_loss():
    data = make_square_dataset(count=8, image_size=32, seed=0)
    result = toy_train(micro_config(), data, steps=200, lr=0.01, seed=0)
    assert result.final_loss <= 0.5 * result.initial_loss
