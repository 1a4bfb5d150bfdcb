from GoldNeck.analysis.bench import BoundGraph, LatencyStats, bench_latency, random_inputs
from GoldNeck.analysis.counters import (
    FlopCount,
    ShapeOps,
    count_flops,
    count_graph_params,
    count_params,
    graph_param_shapes,
    shape_inputs,
)
from GoldNeck.analysis.paths import cross_level_sensitivity, zero_module
from GoldNeck.analysis.report import AblationTable, AnalysisReport, analyze_graph, analyze_neck, emit_ablation_table
