import json

import numpy as np
import pytest

from GoldNeck.analysis.bench import BoundGraph, bench_latency, random_inputs
from GoldNeck.analysis.counters import count_flops, count_graph_params, count_params, graph_param_shapes
from GoldNeck.analysis.paths import zero_module
from GoldNeck.analysis.report import OTHER_ROW, RECORD_FIELDS, analyze_neck, emit_ablation_table
from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.graph import EAGER
from GoldNeck.neck.config import DEFAULT_ABLATION, NeckConfig
from GoldNeck.neck.gd_neck import MODULES, neck_graph, pyramid_dims
from GoldNeck.nn.layers import conv
from GoldNeck.nn.repconv import fuse_store
from GoldNeck.params import ParamStore, as_view, init_params
from GoldNeck.tests.conftest import MICRO_SIZE, micro_config


def conv_graph(bias):
    def graph(ops, x, params):
        return conv(x, as_view(params), "c", 8, 16, kernel=3, padding=1, bias=bias, ops=ops)

    return graph


def two_convs(ops, x, params):
    view = as_view(params)
    y = conv(x, view, "a", 8, 16, kernel=3, padding=1, bias=False, ops=ops)
    return conv(y, view, "b", 16, 4, kernel=1, bias=True, ops=ops)


# ============================================================================
# CONTADORES
# ============================================================================

def test_conv_param_count():
    assert count_graph_params(conv_graph(bias=True), (1, 8, 4, 4)) == 16 * 8 * 9 + 16 == 1168
    assert count_params(init_params(conv_graph(bias=True), (1, 8, 4, 4))) == 1168


def test_conv_flop_count():
    # 2 * out_elems * in * kh * kw
    assert count_flops(conv_graph(bias=False), (1, 8, 4, 4)).total == 2 * 16 * 16 * 8 * 9 == 36864


def test_identity_graph_has_no_flops():
    result = count_flops(lambda ops, x, p: x, (1, 3, 8, 8))
    assert result.total == 0
    assert sum(result.op_counts.values()) == 0


def test_flops_are_additive_over_modules():
    total = count_flops(two_convs, (1, 8, 4, 4))
    first = count_flops(lambda ops, x, p: conv(x, as_view(p), "a", 8, 16, kernel=3, padding=1, bias=False, ops=ops),
                        (1, 8, 4, 4))
    second = count_flops(lambda ops, x, p: conv(x, as_view(p), "b", 16, 4, kernel=1, bias=True, ops=ops),
                         (1, 16, 4, 4))
    assert total.total == first.total + second.total
    assert total.module("a") == first.total
    assert total.module("b") == second.total


def test_dynamic_or_non_positive_dims_rejected():
    with pytest.raises(ConfigurationError, match="no entera"):
        count_flops(two_convs, (1, 8, None, 4))
    with pytest.raises(ConfigurationError):
        count_flops(two_convs, (1, 8, 0, 4))


def test_param_shapes_are_reported_sorted():
    shapes = graph_param_shapes(two_convs, (1, 8, 4, 4))
    assert list(shapes) == ["a.weight", "b.bias", "b.weight"]
    assert shapes["a.weight"] == (16, 8, 3, 3)


def test_fused_store_has_fewer_params_and_flops(micro_cfg, micro_store):
    assert count_params(fuse_store(micro_store)) < count_params(micro_store)
    dims = pyramid_dims(micro_cfg, MICRO_SIZE)
    assert count_flops(neck_graph(micro_cfg, "deploy_form"), dims).total < count_flops(neck_graph(micro_cfg), dims).total


def test_toggles_order_params_and_flops():
    cfg = NeckConfig.preset("S")
    dims = pyramid_dims(cfg, 256)

    def params(toggle):
        return count_graph_params(neck_graph(cfg.with_toggles(toggle)), dims)

    def flops(toggle):
        return count_flops(neck_graph(cfg.with_toggles(toggle)), dims).total

    assert params("low+high+laf") > params("low+high") > params("low")
    assert flops("low+high+laf") > flops("low+high")


def test_zero_module_requires_existing_prefix(micro_store):
    zeroed = zero_module(micro_store, "p4")
    assert all(not np.any(zeroed[n]) for n in zeroed.names("p4"))
    untouched = micro_store.names("low_ifm")[0]
    assert np.array_equal(zeroed[untouched], micro_store[untouched])
    with pytest.raises(ConfigurationError, match="prefijo"):
        zero_module(micro_store, "p7")


# ============================================================================
# REPORTES
# ============================================================================

def test_module_rows_sum_to_totals(micro_cfg):
    report = analyze_neck(micro_cfg, input_size=MICRO_SIZE, with_latency=False)
    names = [r.name for r in report.rows]
    assert names == [*MODULES, OTHER_ROW]
    assert sum(r.params for r in report.rows) == report.total.params
    assert sum(r.flops for r in report.rows) == report.total.flops
    assert report.row("low_ifm").params > 0
    assert report.row(OTHER_ROW).params == 0


def test_report_jsonl_has_record_fields(micro_cfg):
    report = analyze_neck(micro_cfg, input_size=MICRO_SIZE, with_latency=False)
    lines = report.to_jsonl().splitlines()
    assert len(lines) == len(report.rows) + 1
    for line in lines:
        record = json.loads(line)
        assert tuple(record) == RECORD_FIELDS
        assert record["lat_mean_us"] is None
    assert json.loads(lines[-1])["name"] == "total"


def test_report_render_is_text_table(micro_cfg):
    text = analyze_neck(micro_cfg, input_size=MICRO_SIZE, with_latency=False).render()
    assert text.startswith("GD neck N")
    assert "low_fam" in text and "total" in text


def test_pafpn_report_uses_its_own_modules(micro_cfg):
    report = analyze_neck(micro_cfg, input_size=MICRO_SIZE, with_latency=False, neck="pafpn")
    assert report.rows[0].name == "lateral5"
    assert sum(r.flops for r in report.rows) == report.total.flops


def test_unknown_neck_rejected(micro_cfg):
    with pytest.raises(ConfigurationError, match="Neck"):
        analyze_neck(micro_cfg, input_size=MICRO_SIZE, with_latency=False, neck="bifpn")


def test_report_with_latency(micro_cfg):
    report = analyze_neck(micro_cfg, input_size=MICRO_SIZE, iterations=30, warmup=5)
    total = report.total.latency
    assert total.iterations == 30
    assert total.p50_us <= total.p95_us
    records = report.records()
    assert all(r["lat_mean_us"] is not None for r in records)


def test_ablation_table_has_one_row_per_toggle(micro_cfg):
    table = emit_ablation_table(micro_cfg, DEFAULT_ABLATION, input_size=MICRO_SIZE, with_latency=False)
    assert [r.name for r in table.rows] == list(DEFAULT_ABLATION)
    by_name = {r.name: r for r in table.rows}
    assert by_name["low+high+laf"].flops > by_name["low+high"].flops
    assert len(table.to_jsonl().splitlines()) == 5


def test_ablation_single_toggle_and_empty_list(micro_cfg):
    table = emit_ablation_table(micro_cfg, ["laf"], input_size=MICRO_SIZE, with_latency=False)
    assert len(table.rows) == 1
    with pytest.raises(ConfigurationError, match="vacía"):
        emit_ablation_table(micro_cfg, [], input_size=MICRO_SIZE, with_latency=False)
    with pytest.raises(ConfigurationError, match="Toggle"):
        emit_ablation_table(micro_cfg, ["nope"], input_size=MICRO_SIZE, with_latency=False)


# ============================================================================
# LATENCIA
# ============================================================================

def test_bench_latency_samples_and_percentiles():
    stats = bench_latency(two_convs, (1, 8, 4, 4), iterations=30, warmup=5)
    assert stats.iterations == 30
    assert stats.samples_us.shape == (30,)
    assert stats.p50_us <= stats.p95_us
    assert np.all(stats.samples_us > 0)
    assert set(stats.as_dict()) == {"mean_us", "p50_us", "p95_us", "iterations", "warmup", "threads"}


def test_bench_latency_minimums():
    with pytest.raises(ConfigurationError, match="iterations"):
        bench_latency(two_convs, (1, 8, 4, 4), iterations=29)
    with pytest.raises(ConfigurationError, match="warmup"):
        bench_latency(two_convs, (1, 8, 4, 4), warmup=4)


def test_bench_latency_rejects_non_finite_output():
    store = init_params(two_convs, (1, 8, 4, 4))
    store["a.weight"] = np.full(store["a.weight"].shape, np.inf)
    with pytest.raises(NumericalError, match="no finita"):
        bench_latency(two_convs, (1, 8, 4, 4), params=store)


def test_module_latency_is_part_of_total():
    stats = bench_latency(two_convs, (1, 8, 4, 4), iterations=30, warmup=5)
    parts = stats.module_samples("a") + stats.module_samples("b")
    assert np.all(parts <= stats.samples_us)


class CountingStore(ParamStore):
    """ParamStore que cuenta las lecturas por nombre."""

    def __init__(self, entries=None):
        super().__init__(entries)
        self.lookups = 0

    def __getitem__(self, name):
        self.lookups += 1
        return super().__getitem__(name)


def test_bound_graph_runs_without_store_lookups():
    store = CountingStore(init_params(two_convs, (1, 8, 4, 4)))
    inputs = random_inputs((1, 8, 4, 4), seed=3)
    bound = BoundGraph(two_convs, inputs, store)
    store.lookups = 0
    outputs = [bound.run() for _ in range(3)]
    assert store.lookups == 0
    expected = two_convs(EAGER, inputs, store)
    for out in outputs:
        np.testing.assert_array_equal(out.data, expected.data)


def test_bench_latency_reads_the_store_only_while_binding():
    inputs = random_inputs((1, 8, 4, 4), seed=3)
    binding = CountingStore(init_params(two_convs, (1, 8, 4, 4)))
    binding.lookups = 0
    BoundGraph(two_convs, inputs, binding)

    timed = CountingStore(init_params(two_convs, (1, 8, 4, 4)))
    timed.lookups = 0
    bench_latency(two_convs, (1, 8, 4, 4), params=timed, iterations=40, warmup=5, inputs=inputs)
    assert timed.lookups == binding.lookups
