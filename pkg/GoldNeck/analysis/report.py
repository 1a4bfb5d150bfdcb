"""
Reportes de análisis: parámetros, FLOPs y latencia por módulo, y la tabla de
ablación de estructura del neck.

Cada reporte se puede renderizar como texto alineado (pandas) o como filas JSONL
con los campos name, params, flops, lat_mean_us, lat_p50_us, lat_p95_us.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from GoldNeck.analysis.bench import LatencyStats, bench_latency
from GoldNeck.analysis.counters import trace_shapes
from GoldNeck.exceptions import ConfigurationError
from GoldNeck.neck.config import NeckConfig
from GoldNeck.neck.gd_neck import MODULES, neck_graph, pyramid_dims
from GoldNeck.neck.pafpn import PAFPN_MODULES, pafpn_graph
from GoldNeck.nn.repconv import fuse_store
from GoldNeck.params import ParamStore, init_params, matches_prefix
from GoldNeck.settings import MIN_BENCH_ITERATIONS, MIN_BENCH_WARMUP
from GoldNeck.tensor.core import get_num_threads

logger = logging.getLogger(__name__)

OTHER_ROW = "(other)"
TOTAL_ROW = "total"
RECORD_FIELDS = ("name", "params", "flops", "lat_mean_us", "lat_p50_us", "lat_p95_us")
NECKS = {"gd": (neck_graph, MODULES), "pafpn": (pafpn_graph, PAFPN_MODULES)}


@dataclass
class ModuleRow:
    name: str
    params: int
    flops: int
    latency: Optional[LatencyStats] = None

    def record(self) -> dict:
        lat = self.latency
        return {
            "name": self.name,
            "params": int(self.params),
            "flops": int(self.flops),
            "lat_mean_us": lat.mean_us if lat is not None else None,
            "lat_p50_us": lat.p50_us if lat is not None else None,
            "lat_p95_us": lat.p95_us if lat is not None else None,
        }


def _frame(rows: Sequence[ModuleRow]) -> pd.DataFrame:
    df = pd.DataFrame([r.record() for r in rows], columns=list(RECORD_FIELDS))
    if df["lat_mean_us"].isna().all():
        df = df.drop(columns=["lat_mean_us", "lat_p50_us", "lat_p95_us"])
    return df


def _render(title: str, header: dict, df: pd.DataFrame) -> str:
    meta = ", ".join(f"{k}={v}" for k, v in header.items())
    body = df.to_string(index=False, float_format=lambda v: f"{v:,.1f}",
                        formatters={"params": "{:,}".format, "flops": "{:,}".format})
    return f"{title} ({meta})\n{body}\n"


def _jsonl(rows: Sequence[ModuleRow]) -> str:
    return "".join(json.dumps(r.record(), ensure_ascii=False) + "\n" for r in rows)


# ============================================================================
# REPORTE POR MÓDULO
# ============================================================================

@dataclass
class AnalysisReport:
    """Filas por módulo más `(other)`, de modo que las partes suman el total."""
    title: str
    rows: list[ModuleRow]
    total: ModuleRow
    header: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return _frame([*self.rows, self.total])

    def render(self) -> str:
        return _render(self.title, self.header, self.to_frame())

    def records(self) -> list[dict]:
        return [r.record() for r in [*self.rows, self.total]]

    def to_jsonl(self) -> str:
        return _jsonl([*self.rows, self.total])

    def row(self, name: str) -> ModuleRow:
        for r in [*self.rows, self.total]:
            if r.name == name:
                return r
        raise ConfigurationError(f"El reporte no tiene la fila '{name}'")


def analyze_graph(graph, input_dims, modules: Sequence[str], params: Optional[ParamStore] = None,
                  with_latency: bool = True, iterations: int = MIN_BENCH_ITERATIONS,
                  warmup: int = MIN_BENCH_WARMUP, seed: int = 0, title: str = "analysis",
                  header: Optional[dict] = None) -> AnalysisReport:
    """
    Cuenta parámetros y FLOPs por módulo (prefijo de scope) y, opcionalmente, mide latencia.

    Los parámetros son los que el grafo efectivamente pide; con `params` se
    validan contra ese almacén. La fila `(other)` recoge lo que no cae bajo
    ningún módulo (p. ej. overhead de Python en la latencia).
    """
    ops, view, _ = trace_shapes(graph, input_dims, params)
    flops_by_scope = dict(ops.flops_by_scope)
    seen = view.seen

    def params_of(prefix):
        return sum(math.prod(s) for n, s in seen.items() if matches_prefix(n, prefix))

    def flops_of(prefix):
        return sum(v for k, v in flops_by_scope.items() if matches_prefix(k, prefix))

    latency = None
    if with_latency:
        latency = bench_latency(graph, input_dims, params, iterations, warmup, seed)

    rows = [
        ModuleRow(m, params_of(m), flops_of(m), latency.module_stats(m) if latency is not None else None)
        for m in modules
    ]
    total = ModuleRow(TOTAL_ROW, params_of(""), ops.total_flops, latency)
    other_lat = None
    if latency is not None:
        parts = np.zeros_like(latency.samples_us)
        for m in modules:
            parts += latency.module_samples(m)
        other_lat = LatencyStats(latency.samples_us - parts, latency.warmup, latency.threads)
    rows.append(ModuleRow(OTHER_ROW, total.params - sum(r.params for r in rows),
                          total.flops - sum(r.flops for r in rows), other_lat))

    head = {"threads": get_num_threads(), **(header or {})}
    return AnalysisReport(title, rows, total, head)


def analyze_neck(cfg: NeckConfig, input_size: int = 256, params: Optional[ParamStore] = None,
                 mode: str = "train_form", with_latency: bool = True, iterations: int = MIN_BENCH_ITERATIONS,
                 warmup: int = MIN_BENCH_WARMUP, seed: int = 0, neck: str = "gd") -> AnalysisReport:
    """Reporte por módulo del neck (GD: low_fam ... n5; PAFPN: lateral5 ... bu5) a resolución input_size."""
    if neck not in NECKS:
        raise ConfigurationError(f"Neck desconocido '{neck}'; opciones: {', '.join(NECKS)}", key="model.neck")
    build, modules = NECKS[neck]
    if mode == "deploy_form" and params is None and with_latency:
        params = fuse_store(init_params(build(cfg), pyramid_dims(cfg, input_size), seed))
    return analyze_graph(
        build(cfg, mode), pyramid_dims(cfg, input_size), modules, params, with_latency,
        iterations, warmup, seed, title=f"{neck.upper()} neck {cfg.scale}",
        header={"input": f"{input_size}x{input_size}", "mode": mode},
    )


# ============================================================================
# TABLA DE ABLACIÓN
# ============================================================================

@dataclass
class AblationTable:
    rows: list[ModuleRow]
    header: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return _frame(self.rows)

    def render(self) -> str:
        return _render("Ablación de estructura GD", self.header, self.to_frame())

    def records(self) -> list[dict]:
        return [r.record() for r in self.rows]

    def to_jsonl(self) -> str:
        return _jsonl(self.rows)


def emit_ablation_table(cfg: NeckConfig, toggles: Sequence[str], input_size: int = 256, with_latency: bool = True,
                        iterations: int = MIN_BENCH_ITERATIONS, warmup: int = MIN_BENCH_WARMUP, seed: int = 0,
                        mode: str = "train_form") -> AblationTable:
    """
    Una fila por variante de `toggles` (nombres de ABLATION_TOGGLES) con los
    totales de parámetros, FLOPs y latencia del neck completo.

    Raises:
        ConfigurationError: lista vacía o toggle desconocido
    """
    toggles = [t.strip() for t in toggles if t and t.strip()]
    if not toggles:
        raise ConfigurationError("La lista de toggles de ablación está vacía", key="toggles")
    variants = [(name, cfg.with_toggles(name)) for name in toggles]

    logger.info(f"🚀 Tabla de ablación: {len(variants)} variantes, escala {cfg.scale}, entrada {input_size}")
    rows = []
    for name, variant in variants:
        report = analyze_neck(variant, input_size, None, mode, with_latency, iterations, warmup, seed)
        row = report.total
        rows.append(ModuleRow(name, row.params, row.flops, row.latency))
        logger.info(f"📊 {name}: {row.params:,} params, {row.flops:,} FLOPs")
    logger.info("✅ Tabla de ablación completa")
    return AblationTable(rows, {"scale": cfg.scale, "input": f"{input_size}x{input_size}",
                                "mode": mode, "threads": get_num_threads()})
