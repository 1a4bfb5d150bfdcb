"""
Benchmark de latencia en CPU con reloj monotónico.

El grafo se graba una vez (BoundGraph) con las entradas fijas y los parámetros
ya resueltos; cada iteración solo recorre los nodos de cómputo de la cinta, sin
consultar el almacén ni construir ConvSpec.
"""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from GoldNeck.analysis.counters import shape_inputs
from GoldNeck.autodiff.tape import forward_traced
from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.graph import flatten_structure, forward_op, map_structure
from GoldNeck.params import ParamStore, init_params, matches_prefix
from GoldNeck.settings import MIN_BENCH_ITERATIONS, MIN_BENCH_WARMUP
from GoldNeck.tensor.core import Tensor, as_compute, get_num_threads

logger = logging.getLogger(__name__)


class BoundGraph:
    """
    Forward de `graph` grabado una vez con `inputs` y `store`.

    run() re-ejecuta solo las operaciones (mismos kernels, misma salida que el
    forward normal) y acumula nanosegundos por scope más interno en `ns_by_scope`.
    """

    def __init__(self, graph, inputs, store: ParamStore):
        _, self.tape = forward_traced(graph, inputs, store)
        self._steps = [(i, node.op, node.inputs, node.attrs, node.scope)
                       for i, node in enumerate(self.tape.nodes) if not node.is_leaf]
        self.ns_by_scope: dict[str, int] = defaultdict(int)

    def __len__(self):
        return len(self._steps)

    def run(self):
        values = list(self.tape.values)
        elapsed: dict[str, int] = defaultdict(int)
        for index, op, inputs, attrs, scope in self._steps:
            start = time.perf_counter_ns()
            values[index] = forward_op(op, [values[j] for j in inputs], attrs)
            elapsed[scope] += time.perf_counter_ns() - start
        self.ns_by_scope = elapsed
        return map_structure(lambda node: values[node.tape_index] if hasattr(node, "tape_index") else node,
                             self.tape.output)


@dataclass
class LatencyStats:
    """Estadísticas en microsegundos sobre las iteraciones posteriores al warmup."""
    samples_us: np.ndarray
    warmup: int
    threads: int = 1
    scope_samples_us: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return int(self.samples_us.size)

    @property
    def mean_us(self) -> float:
        return float(np.mean(self.samples_us))

    @property
    def p50_us(self) -> float:
        return float(np.percentile(self.samples_us, 50))

    @property
    def p95_us(self) -> float:
        return float(np.percentile(self.samples_us, 95))

    def module_samples(self, prefix: str) -> np.ndarray:
        """Tiempo por iteración de las operaciones bajo `prefix`."""
        total = np.zeros_like(self.samples_us)
        for k, v in self.scope_samples_us.items():
            if matches_prefix(k, prefix):
                total += v
        return total

    def module_stats(self, prefix: str) -> "LatencyStats":
        return LatencyStats(self.module_samples(prefix), self.warmup, self.threads)

    def as_dict(self) -> dict:
        return {
            "mean_us": self.mean_us,
            "p50_us": self.p50_us,
            "p95_us": self.p95_us,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "threads": self.threads,
        }


def random_inputs(input_dims: Any, seed: int = 0):
    """Tensores normales estándar con las dims de `input_dims` (misma estructura)."""
    rng = np.random.default_rng(seed)

    def materialize(value):
        return Tensor(rng.standard_normal(value.shape).astype(np.float32), copy=False)

    return map_structure(materialize, shape_inputs(input_dims))


def _check_finite(out, iteration: int) -> None:
    for path, leaf in flatten_structure(out):
        if not np.all(np.isfinite(as_compute(leaf))):
            raise NumericalError(f"Salida no finita en '{path or 'output'}' durante el benchmark "
                                 f"(iteración {iteration})", step=iteration)


def bench_latency(graph, input_dims, params: Optional[ParamStore] = None, iterations: int = MIN_BENCH_ITERATIONS,
                  warmup: int = MIN_BENCH_WARMUP, seed: int = 0, inputs=None) -> LatencyStats:
    """
    Mide la latencia del forward de `graph`.

    Args:
        params: almacén a usar; si es None se inicializa con `seed`
        inputs: entradas ya materializadas; si es None se generan con `seed`

    Raises:
        ConfigurationError: iterations < 30 o warmup < 5
        NumericalError: salida no finita en alguna iteración
    """
    if iterations < MIN_BENCH_ITERATIONS:
        raise ConfigurationError(f"iterations debe ser >= {MIN_BENCH_ITERATIONS} (recibido {iterations})",
                                 key="bench.iterations")
    if warmup < MIN_BENCH_WARMUP:
        raise ConfigurationError(f"warmup debe ser >= {MIN_BENCH_WARMUP} (recibido {warmup})", key="bench.warmup")

    store = params if params is not None else init_params(graph, input_dims, seed)
    inputs = inputs if inputs is not None else random_inputs(input_dims, seed)
    bound = BoundGraph(graph, inputs, store)

    for i in range(warmup):
        _check_finite(bound.run(), i)

    samples = np.empty(iterations, dtype=np.float64)
    per_scope: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(iterations, dtype=np.float64))
    for i in range(iterations):
        start = time.perf_counter_ns()
        out = bound.run()
        samples[i] = (time.perf_counter_ns() - start) / 1e3
        for k, ns in bound.ns_by_scope.items():
            per_scope[k][i] = ns / 1e3
        _check_finite(out, warmup + i)

    stats = LatencyStats(samples, warmup, get_num_threads(), dict(per_scope))
    logger.debug(f"⏱️ Latencia: media {stats.mean_us:.1f}us, p50 {stats.p50_us:.1f}us, p95 {stats.p95_us:.1f}us "
                 f"({iterations} iteraciones, {warmup} de warmup)")
    return stats
