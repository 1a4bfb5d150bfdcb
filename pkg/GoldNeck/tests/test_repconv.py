import numpy as np
import pytest

from GoldNeck.analysis.bench import bench_latency
from GoldNeck.analysis.counters import count_params
from GoldNeck.exceptions import ConfigurationError, StateError
from GoldNeck.nn.repconv import (
    REPARAM,
    RepBlockParams,
    RepConvParams,
    fuse_store,
    fused_kernel,
    repblock_forward,
    repblock_fuse,
    repconv_forward,
    repconv_fuse,
)
from GoldNeck.params import ParamStore, StoreView, as_view, init_params
from GoldNeck.settings import BN_EPS, FUSION_TOLERANCE
from GoldNeck.tensor.core import Tensor


def repconv_store(in_c, out_c, seed=0, prefix="rc") -> ParamStore:
    def graph(ops, x, params):
        return repconv_forward(x, RepConvParams(as_view(params), prefix, in_c, out_c), ops=ops)

    return init_params(graph, (1, in_c, 4, 4), seed)


def randomize(store: ParamStore, rng) -> ParamStore:
    out = store.copy()
    for name in out:
        shape = out[name].shape
        if name.endswith("running_var"):
            out[name] = rng.uniform(0.5, 2.0, shape)
        elif name.endswith("conv.weight"):
            out[name] = 0.3 * rng.standard_normal(shape)
        elif name.endswith(("running_mean", ".bias")):
            out[name] = 0.5 * rng.standard_normal(shape)
        else:
            out[name] = rng.uniform(0.5, 1.5, shape)
    return out


def test_missing_identity_branch_when_channels_differ(rng):
    store = repconv_store(3, 5)
    p = RepConvParams(StoreView(store), "rc", 3, 5)
    assert p.branch_identity() is None
    assert not any("rbr_identity" in n for n in store)
    out = repconv_forward(Tensor(rng.standard_normal((2, 3, 6, 6))), p)
    assert out.dims == (2, 5, 6, 6)


def test_zero_weights_identity_bn_reduce_to_relu_of_input(rng):
    store = repconv_store(4, 4)
    for name in store.names("rc"):
        if name.endswith("conv.weight"):
            store[name] = np.zeros_like(store[name])
    x = rng.standard_normal((1, 4, 5, 5))
    out = repconv_forward(Tensor(x), RepConvParams(StoreView(store), "rc", 4, 4))
    np.testing.assert_allclose(out.data, np.maximum(x, 0.0) / np.sqrt(1.0 + BN_EPS), atol=1e-6)


def test_fused_kernel_equals_lone_3x3_branch(rng):
    store = repconv_store(3, 5)
    for name in store.names("rc.rbr_1x1.conv"):
        store[name] = np.zeros_like(store[name])
    weight, bias = fused_kernel(RepConvParams(StoreView(store), "rc", 3, 5))
    expected = store["rc.rbr_dense.conv.weight"] / np.sqrt(1.0 + BN_EPS)
    np.testing.assert_allclose(weight, expected, rtol=1e-6)
    np.testing.assert_allclose(bias, np.zeros(5))


def test_fused_kernel_of_identity_branch_is_dirac():
    store = repconv_store(3, 3)
    for name in store.names("rc"):
        if name.endswith("conv.weight"):
            store[name] = np.zeros_like(store[name])
    weight, _ = fused_kernel(RepConvParams(StoreView(store), "rc", 3, 3))
    dirac = np.zeros((3, 3, 3, 3))
    dirac[np.arange(3), np.arange(3), 1, 1] = 1.0
    np.testing.assert_allclose(weight, dirac, atol=1e-5)


def test_fusion_equivalence_over_random_draws():
    rng = np.random.default_rng(42)
    worst = 0.0
    for draw in range(200):
        in_c = int(rng.integers(1, 5))
        out_c = in_c if draw % 2 == 0 else int(rng.integers(1, 5))
        store = randomize(repconv_store(in_c, out_c, seed=draw), rng)
        p = RepConvParams(StoreView(store), "rc", in_c, out_c)
        x = Tensor(rng.uniform(-3.0, 3.0, (1, in_c, 5, 5)))
        train = repconv_forward(x, p, "train_form")
        deploy = repconv_forward(x, repconv_fuse(p), "deploy_form")
        worst = max(worst, float(np.max(np.abs(train.data.astype(np.float64) - deploy.data))))
    assert worst <= FUSION_TOLERANCE


def test_fuse_store_drops_branches_and_has_fewer_params(rng):
    store = randomize(repconv_store(4, 4), rng)
    fused = fuse_store(store)
    assert sorted(fused) == [f"rc.{REPARAM}.bias", f"rc.{REPARAM}.weight"]
    assert count_params(fused) < count_params(store)

    x = Tensor(rng.uniform(-3.0, 3.0, (2, 4, 6, 6)))
    train = repconv_forward(x, RepConvParams(StoreView(store), "rc", 4, 4), "train_form")
    deploy = repconv_forward(x, RepConvParams(StoreView(fused), "rc", 4, 4), "deploy_form")
    np.testing.assert_allclose(train.data, deploy.data, atol=FUSION_TOLERANCE)


def test_fusing_twice_is_a_no_op(rng):
    p = repconv_fuse(RepConvParams(StoreView(randomize(repconv_store(2, 2), rng)), "rc", 2, 2))
    assert repconv_fuse(p) is p


def test_branches_win_in_train_form_when_both_forms_are_present(rng):
    store = randomize(repconv_store(3, 3), rng)
    x = Tensor(rng.uniform(-2.0, 2.0, (1, 3, 5, 5)))
    branches = repconv_forward(x, RepConvParams(StoreView(store), "rc", 3, 3), "train_form")

    both = store.copy()
    both[f"rc.{REPARAM}.weight"] = np.zeros((3, 3, 3, 3))
    both[f"rc.{REPARAM}.bias"] = np.full(3, -1.0)
    p = RepConvParams(StoreView(both), "rc", 3, 3)
    assert p.has_branches and p.is_fused
    np.testing.assert_array_equal(repconv_forward(x, p, "train_form").data, branches.data)
    assert not np.any(repconv_forward(x, p, "deploy_form").data)


def test_deploy_form_before_fusion_is_a_state_error(rng):
    p = RepConvParams(StoreView(repconv_store(2, 2)), "rc", 2, 2)
    with pytest.raises(StateError, match="fusionar"):
        repconv_forward(Tensor(rng.standard_normal((1, 2, 3, 3))), p, "deploy_form")


def test_unknown_mode_rejected(rng):
    p = RepConvParams(StoreView(repconv_store(2, 2)), "rc", 2, 2)
    with pytest.raises(ConfigurationError, match="Modo"):
        repconv_forward(Tensor(rng.standard_normal((1, 2, 3, 3))), p, "eval")


# ============================================================================
# REPBLOCK
# ============================================================================

def repblock_store(in_c, out_c, depth, seed=0):
    def graph(ops, x, params):
        return repblock_forward(x, RepBlockParams.build(as_view(params), "blk", in_c, out_c, depth), ops=ops)

    return init_params(graph, (1, in_c, 4, 4), seed)


def test_repblock_equals_manual_composition(rng):
    store = randomize(repblock_store(3, 4, 3), rng)
    view = StoreView(store)
    x = Tensor(rng.standard_normal((1, 3, 5, 5)))
    manual = x
    for i, (cin, cout) in enumerate(((3, 4), (4, 4), (4, 4))):
        manual = repconv_forward(manual, RepConvParams(view, f"blk.{i}", cin, cout))
    block = repblock_forward(x, RepBlockParams.build(view, "blk", 3, 4, 3))
    assert block.data.tobytes() == manual.data.tobytes()


def test_repblock_fused_matches_train_form(rng):
    store = randomize(repblock_store(3, 4, 3), rng)
    p = RepBlockParams.build(StoreView(store), "blk", 3, 4, 3)
    x = Tensor(rng.uniform(-3.0, 3.0, (1, 3, 6, 6)))
    train = repblock_forward(x, p, "train_form")
    deploy = repblock_forward(x, repblock_fuse(p), "deploy_form")
    scale = max(1.0, float(np.max(np.abs(train.data))))
    assert np.max(np.abs(train.data - deploy.data)) <= FUSION_TOLERANCE * 3 * scale


def test_repblock_depth_must_be_positive():
    with pytest.raises(ConfigurationError, match="depth"):
        RepBlockParams.build(StoreView(ParamStore()), "blk", 2, 2, 0)


@pytest.mark.slow
def test_fused_repconv_is_faster_at_m_scale_widths():
    rng = np.random.default_rng(8)
    channels, size = 192, 16
    store = randomize(repconv_store(channels, channels), rng)
    fused = fuse_store(store)

    def graph(mode):
        def run(ops, x, params):
            return repconv_forward(x, RepConvParams(as_view(params), "rc", channels, channels), mode, ops=ops)

        return run

    dims = (1, channels, size, size)
    train = bench_latency(graph("train_form"), dims, params=store, iterations=30, warmup=5)
    deploy = bench_latency(graph("deploy_form"), dims, params=fused, iterations=30, warmup=5)
    assert count_params(fused) < count_params(store)
    assert deploy.p50_us < train.p50_us * 1.1
