"""
Conteo de parámetros y FLOPs sobre el backend de formas.

ShapeOps ejecuta cualquier grafo sin reservar memoria: cada operación infiere la
forma de salida, suma sus FLOPs al scope más interno y devuelve un ShapeValue.
Multiplicación y suma cuentan por separado (MAC = 2 FLOPs).
"""
from __future__ import annotations

import contextlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import Ops
from GoldNeck.params import ParamStore, ShapeValue, ShapeView, matches_prefix
from GoldNeck.tensor import shapes
from GoldNeck.tensor.core import Tensor, dims_of

logger = logging.getLogger(__name__)

# FLOPs por elemento de salida
PER_ELEMENT = {
    "batchnorm": 4,
    "relu": 1,
    "sigmoid": 1,
    "bilinear": 8,
    "add": 1,
    "mul": 1,
    "scale": 1,
    "softmax": 5,
    "concat": 0,
    "slice": 0,
    "reshape": 0,
    "swap_last2": 0,
}
# FLOPs por elemento de la entrada (reducciones y pérdidas)
PER_INPUT_ELEMENT = {
    "sum": 1,
    "mean": 1,
    "bce_with_logits_mean": 6,
    "masked_l1_mean": 3,
}


# ============================================================================
# FORMAS
# ============================================================================

def _conv_shape(ins, attrs):
    x, w = ins[0], ins[1]
    return shapes.conv2d_dims(x, w[1] * attrs["groups"], w[0], (w[2], w[3]),
                              attrs["stride"], attrs["padding"], attrs["groups"])


SHAPES = {
    "conv2d": _conv_shape,
    "batchnorm": lambda ins, a: shapes.batchnorm_dims(ins[0], *ins[1:5]),
    "relu": lambda ins, a: tuple(ins[0]),
    "sigmoid": lambda ins, a: tuple(ins[0]),
    "avgpool": lambda ins, a: shapes.avgpool_dims(ins[0], a["target"]),
    "bilinear": lambda ins, a: shapes.bilinear_dims(ins[0], a["target"]),
    "concat": lambda ins, a: shapes.concat_dims(ins),
    "slice": lambda ins, a: shapes.slice_dims(ins[0], a["start"], a["stop"]),
    "matmul": lambda ins, a: shapes.matmul_dims(ins[0], ins[1]),
    "softmax": lambda ins, a: tuple(ins[0]),
    "add": lambda ins, a: shapes.elementwise_dims(ins[0], ins[1], "add"),
    "mul": lambda ins, a: shapes.elementwise_dims(ins[0], ins[1], "mul"),
    "scale": lambda ins, a: tuple(ins[0]),
    "reshape": lambda ins, a: shapes.reshape_dims(ins[0], a["dims"]),
    "swap_last2": lambda ins, a: shapes.swap_last2_dims(ins[0]),
    "sum": lambda ins, a: shapes.SCALAR_DIMS,
    "mean": lambda ins, a: shapes.SCALAR_DIMS,
    "bce_with_logits_mean": lambda ins, a: shapes.masked_dims(ins[0], ins[1], op="bce_with_logits_mean"),
    "masked_l1_mean": lambda ins, a: shapes.masked_dims(ins[0], ins[1], ins[2], op="masked_l1_mean"),
}


# ============================================================================
# FLOPS
# ============================================================================

def conv_flops(out_dims, in_per_group: int, kernel, bias: bool) -> int:
    """2·out_elems·(in/groups)·kh·kw (+ out_elems con bias)."""
    out_elems = math.prod(out_dims)
    return 2 * out_elems * in_per_group * kernel[0] * kernel[1] + (out_elems if bias else 0)


def avgpool_flops(in_dims, target) -> int:
    """Un FLOP por elemento de entrada dentro de cada ventana."""
    n, c, h, w = in_dims
    rows = sum(b - a for a, b in shapes.pool_windows(h, target[0]))
    cols = sum(b - a for a, b in shapes.pool_windows(w, target[1]))
    return n * c * rows * cols


def op_flops(op: str, ins: list[tuple], out: tuple, attrs: dict) -> int:
    if op == "conv2d":
        w = ins[1]
        return conv_flops(out, w[1], (w[2], w[3]), bias=len(ins) > 2)
    if op == "matmul":
        a, b = ins
        return 2 * a[0] * a[1] * a[2] * b[3] * a[3]
    if op == "avgpool":
        return 0 if tuple(ins[0][2:]) == tuple(out[2:]) else avgpool_flops(ins[0], out[2:])
    if op == "bilinear":
        return 0 if tuple(ins[0][2:]) == tuple(out[2:]) else PER_ELEMENT["bilinear"] * math.prod(out)
    if op in PER_INPUT_ELEMENT:
        return PER_INPUT_ELEMENT[op] * math.prod(ins[0])
    if op in PER_ELEMENT:
        return PER_ELEMENT[op] * math.prod(out)
    raise ConfigurationError(f"count_flops: operación sin costo definido '{op}'")


class ShapeOps(Ops):
    """Backend de solo formas: acumula FLOPs por scope más interno."""

    name = "shape"

    def __init__(self):
        self._scopes: list[str] = []
        self.flops_by_scope: dict[str, int] = defaultdict(int)
        self.op_counts: dict[str, int] = defaultdict(int)

    @contextlib.contextmanager
    def scope(self, name):
        self._scopes.append(name)
        try:
            yield
        finally:
            self._scopes.pop()

    def _apply(self, op, inputs, attrs):
        fn = SHAPES.get(op)
        if fn is None:
            raise ConfigurationError(f"Operación no soportada: '{op}' (backend {self.name})")
        ins = [dims_of(v) for v in inputs]
        out = tuple(fn(ins, attrs))
        self.flops_by_scope[self._scopes[-1] if self._scopes else ""] += op_flops(op, ins, out, attrs)
        self.op_counts[op] += 1
        return ShapeValue(out)

    @property
    def total_flops(self) -> int:
        return sum(self.flops_by_scope.values())


# ============================================================================
# ENTRADAS Y CONTADORES
# ============================================================================

def _shape_leaf(dims) -> ShapeValue:
    if any(d is None or isinstance(d, bool) or not isinstance(d, (int, np.integer)) for d in dims):
        raise ConfigurationError(f"Forma dinámica o no entera: {tuple(dims)}")
    if any(int(d) < 1 for d in dims):
        raise ConfigurationError(f"Forma con dims no positivas: {tuple(dims)}")
    return ShapeValue(dims)


def shape_inputs(structure: Any):
    """
    Convierte una estructura de dims (o de tensores) en ShapeValues.

    Acepta tuplas de enteros, Tensor/ndarray, dicts, listas y objetos con `map_values`.

    Raises:
        ConfigurationError: dims dinámicas (None, no enteras) o no positivas
    """
    if isinstance(structure, ShapeValue):
        return structure
    if isinstance(structure, (Tensor, np.ndarray)):
        return ShapeValue(dims_of(structure))
    if hasattr(structure, "map_values"):
        return structure.map_values(shape_inputs)
    if isinstance(structure, dict):
        return {k: shape_inputs(v) for k, v in structure.items()}
    if isinstance(structure, (tuple, list)):
        if structure and all(d is None or isinstance(d, (int, float, str, np.integer)) for d in structure):
            return _shape_leaf(structure)
        return type(structure)(shape_inputs(v) for v in structure)
    raise ConfigurationError(f"Estructura de formas no soportada: {type(structure).__name__}")


def count_params(store: ParamStore, prefix: str = "") -> int:
    """Cantidad de floats en los tensores cuyo nombre cae bajo `prefix`."""
    return store.numel(prefix)


@dataclass
class FlopCount:
    total: int
    by_scope: dict[str, int] = field(default_factory=dict)
    op_counts: dict[str, int] = field(default_factory=dict)
    output: Any = None

    def module(self, prefix: str) -> int:
        return sum(v for k, v in self.by_scope.items() if matches_prefix(k, prefix))


def trace_shapes(graph, input_dims, params: Optional[ParamStore] = None) -> tuple[ShapeOps, ShapeView, Any]:
    """Corre `graph` en el backend de formas; sin almacén, todo parámetro pedido existe."""
    ops = ShapeOps()
    view = ShapeView(params)
    out = graph(ops, shape_inputs(input_dims), view)
    return ops, view, out


def count_flops(graph, input_dims, params: Optional[ParamStore] = None) -> FlopCount:
    """
    FLOPs de un forward de `graph` con entradas de dims `input_dims`.

    Raises:
        ConfigurationError: formas dinámicas o incompatibles
    """
    ops, _, out = trace_shapes(graph, input_dims, params)
    result = FlopCount(ops.total_flops, dict(ops.flops_by_scope), dict(ops.op_counts), out)
    logger.debug(f"📊 FLOPs: {result.total:,} en {sum(ops.op_counts.values())} operaciones")
    return result


def count_graph_params(graph, input_dims, params: Optional[ParamStore] = None, prefix: str = "") -> int:
    """Parámetros que `graph` pide bajo `prefix`, sin reservarlos."""
    _, view, _ = trace_shapes(graph, input_dims, params)
    return sum(math.prod(shape) for name, shape in view.seen.items() if matches_prefix(name, prefix))


def graph_param_shapes(graph, input_dims) -> dict[str, tuple[int, ...]]:
    _, view, _ = trace_shapes(graph, input_dims)
    return dict(sorted(view.seen.items()))
