import numpy as np
import pytest

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER
from GoldNeck.nn.inject_laf import InjectParams, LafParams, attention_gate, inject, inject_with_laf, laf_fuse
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import repblock_forward
from GoldNeck.params import ParamStore, StoreView, as_view, init_params
from GoldNeck.tensor import kernels
from GoldNeck.tensor.core import Tensor


def inject_store(local_c=4, inj_c=6, out_c=4, seed=0):
    def graph(ops, inputs, params):
        p = InjectParams(as_view(params), "inj", local_c, inj_c, out_c, depth=1)
        return inject(inputs["local"], inputs["inj"], p, (8, 8), ops=ops)

    return init_params(graph, {"local": (1, local_c, 8, 8), "inj": (1, inj_c, 2, 2)}, seed)


def level_pyramid(rng, channels=(4, 4, 4), sizes=(16, 8, 4), start=2):
    return FeaturePyramid(
        (f"B{start + i}", Tensor(rng.standard_normal((1, c, s, s)))) for i, (c, s) in enumerate(zip(channels, sizes))
    )


# ============================================================================
# INYECCIÓN
# ============================================================================

def test_inject_matches_hand_composition(rng):
    store = inject_store()
    p = InjectParams(StoreView(store), "inj", 4, 6, 4, depth=1)
    f_local = Tensor(rng.standard_normal((1, 4, 8, 8)))
    f_inj = Tensor(rng.standard_normal((1, 6, 2, 2)))

    act = kernels.bilinear_resize(kernels.activation(kernels.conv2d(f_inj, p.conv_act), "sigmoid"), (8, 8))
    embed = kernels.bilinear_resize(kernels.conv2d(f_inj, p.conv_global_embed), (8, 8))
    fused = kernels.add(kernels.mul(kernels.conv2d(f_local, p.conv_local_embed), act), embed)
    expected = repblock_forward(fused, p.tail)

    out = inject(f_local, f_inj, p, (8, 8))
    assert out.dims == (1, 4, 8, 8)
    assert out.data.tobytes() == expected.data.tobytes()


def test_attention_gate_is_strictly_inside_unit_interval(rng):
    p = InjectParams(StoreView(inject_store()), "inj", 4, 6, 4)
    gate = attention_gate(Tensor(50.0 * rng.standard_normal((1, 6, 2, 2))), p, (8, 8)).data
    assert np.all((gate > 0.0) & (gate < 1.0))


def test_inject_same_size_injection_uses_no_resize(rng):
    store = init_params(
        lambda ops, i, prm: inject(i["l"], i["g"], InjectParams(as_view(prm), "inj", 3, 3, 3), (4, 4), ops=ops),
        {"l": (1, 3, 4, 4), "g": (1, 3, 4, 4)}, 0,
    )
    p = InjectParams(StoreView(store), "inj", 3, 3, 3)
    f = Tensor(rng.standard_normal((1, 3, 4, 4)))
    act = kernels.activation(kernels.conv2d(f, p.conv_act), "sigmoid")
    fused = kernels.add(kernels.mul(kernels.conv2d(f, p.conv_local_embed), act), kernels.conv2d(f, p.conv_global_embed))
    assert inject(f, f, p, (4, 4)).data.tobytes() == repblock_forward(fused, p.tail).data.tobytes()


def test_inject_rejects_target_mismatch(rng):
    p = InjectParams(StoreView(inject_store()), "inj", 4, 6, 4)
    with pytest.raises(ConfigurationError, match="target"):
        inject(Tensor(rng.standard_normal((1, 4, 8, 8))), Tensor(rng.standard_normal((1, 6, 2, 2))), p, (4, 4))


def test_inject_rejects_injection_channel_mismatch(rng):
    p = InjectParams(StoreView(inject_store()), "inj", 4, 6, 4)
    with pytest.raises(ConfigurationError, match="inj_channels"):
        inject(Tensor(rng.standard_normal((1, 4, 8, 8))), Tensor(rng.standard_normal((1, 5, 2, 2))), p, (8, 8))


def test_missing_params_name_the_module(rng):
    p = InjectParams(StoreView(ParamStore()), "p3.inject", 4, 6, 4)
    with pytest.raises(ConfigurationError, match="p3.inject"):
        inject(Tensor(rng.standard_normal((1, 4, 8, 8))), Tensor(rng.standard_normal((1, 6, 2, 2))), p, (8, 8))


# ============================================================================
# LAF
# ============================================================================

def laf_store(mode, channels, merge="concat", activation=True, neighbors=None, size=16):
    sides = {"lower": channels[0], "upper": channels[2]}

    def graph(ops, pyramid, params):
        p = LafParams(as_view(params), "laf", mode, channels[1], sides, merge, activation, neighbors)
        return laf_fuse(3, pyramid, p, ops=ops)

    dims = FeaturePyramid((f"B{i + 2}", (1, c, size >> i, size >> i)) for i, c in enumerate(channels))
    return init_params(graph, dims, 0)


def test_laf_add_mode_with_zero_neighbors_returns_local(rng):
    store = laf_store("low", (4, 4, 4), merge="add", activation=False)
    store["laf.reduce.conv.weight"] = np.eye(4).reshape(4, 4, 1, 1)
    p = LafParams(StoreView(store), "laf", "low", 4, {"lower": 4, "upper": 4}, "add", activation=False)
    local = rng.standard_normal((1, 4, 8, 8))
    pyramid = FeaturePyramid([("B2", Tensor.zeros((1, 4, 16, 16))), ("B3", Tensor(local)),
                              ("B4", Tensor.zeros((1, 4, 4, 4)))])
    out = laf_fuse(3, pyramid, p)
    np.testing.assert_allclose(out.data, local, rtol=1e-4, atol=1e-6)


def test_laf_output_has_local_shape_with_adapters(rng):
    store = laf_store("low", (2, 4, 8))
    assert "laf.adapt_lower.weight" in store and "laf.adapt_upper.weight" in store
    p = LafParams(StoreView(store), "laf", "low", 4, {"lower": 2, "upper": 8})
    pyramid = level_pyramid(rng, channels=(2, 4, 8))
    assert laf_fuse(3, pyramid, p).dims == (1, 4, 8, 8)


def test_laf_high_mode_equals_low_mode_without_upper_neighbor(rng):
    store = laf_store("high", (4, 4, 4))
    pyramid = level_pyramid(rng)
    high = LafParams(StoreView(store), "laf", "high", 4, {"lower": 4})
    low = LafParams(StoreView(store), "laf", "low", 4, {"lower": 4}, neighbors=("lower",))
    assert laf_fuse(3, pyramid, high).data.tobytes() == laf_fuse(3, pyramid, low).data.tobytes()


def test_laf_missing_neighbor_is_reported(rng):
    store = laf_store("low", (4, 4, 4))
    p = LafParams(StoreView(store), "laf", "low", 4, {"lower": 4, "upper": 4})
    pyramid = FeaturePyramid([("B2", Tensor(rng.standard_normal((1, 4, 16, 16)))),
                              ("B3", Tensor(rng.standard_normal((1, 4, 8, 8))))])
    with pytest.raises(ConfigurationError, match="vecino upper"):
        laf_fuse(3, pyramid, p)


def test_laf_unknown_merge_rejected():
    with pytest.raises(ConfigurationError, match="merge"):
        LafParams(StoreView(ParamStore()), "laf", "low", 4, {"lower": 4, "upper": 4}, merge="max")


def test_inject_with_laf_without_injection_returns_laf_output(rng):
    store = laf_store("low", (4, 4, 4))
    p = LafParams(StoreView(store), "laf", "low", 4, {"lower": 4, "upper": 4})
    pyramid = level_pyramid(rng)
    alone = inject_with_laf(3, pyramid, None, p, None)
    assert alone.data.tobytes() == laf_fuse(3, pyramid, p).data.tobytes()


def test_inject_with_laf_and_nothing_enabled_is_pass_through(rng):
    pyramid = level_pyramid(rng)
    assert inject_with_laf(3, pyramid, None, None, None, ops=EAGER) is pyramid["B3"]
