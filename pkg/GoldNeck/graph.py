"""
Ejecución de grafos sobre backends de operaciones intercambiables.

Un grafo es un callable `graph(ops, inputs, params)`. El mismo código de los
composites corre sobre:
  - EagerOps: llama a los kernels (forward normal)
  - TracingOps (autodiff.tape): además graba la cinta para backward
  - ShapeOps (analysis.counters): solo formas y FLOPs, sin reservar memoria

Los métodos públicos de Ops traducen cada operación a `_apply(op, inputs, attrs)`;
los backends solo implementan `_apply`.
"""
from __future__ import annotations

import contextlib
from typing import Any, Callable, Sequence

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.params import ShapeValue, as_view
from GoldNeck.tensor import kernels, shapes
from GoldNeck.tensor.core import BatchNormStats, ConvSpec, Tensor, dims_of

ACTIVATIONS = ("relu", "sigmoid")


# ============================================================================
# ESTRUCTURAS DE VALORES
# ============================================================================

def is_leaf(obj) -> bool:
    return isinstance(obj, (Tensor, np.ndarray, ShapeValue)) or hasattr(obj, "tape_index")


def map_structure(fn: Callable, obj):
    """Aplica fn a cada hoja de dicts, listas, tuplas y objetos con `map_values`."""
    if is_leaf(obj):
        return fn(obj)
    if hasattr(obj, "map_values"):
        return obj.map_values(lambda v: map_structure(fn, v))
    if isinstance(obj, dict):
        return {k: map_structure(fn, v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(map_structure(fn, v) for v in obj)
    raise ConfigurationError(f"Estructura de valores no soportada: {type(obj).__name__}")


def flatten_structure(obj, path: str = "") -> list[tuple[str, Any]]:
    """Lista (ruta, hoja) en orden determinista."""
    if is_leaf(obj):
        return [(path, obj)]
    if hasattr(obj, "items_flat"):
        obj = dict(obj.items_flat())
    if isinstance(obj, dict):
        items = obj.items()
    elif isinstance(obj, (list, tuple)):
        items = enumerate(obj)
    else:
        raise ConfigurationError(f"Estructura de valores no soportada: {type(obj).__name__}")
    out = []
    for k, v in items:
        out.extend(flatten_structure(v, f"{path}.{k}" if path else str(k)))
    return out


# ============================================================================
# BACKEND BASE
# ============================================================================

class Ops:
    """Superficie de operaciones que usan los composites."""

    name = "base"

    def _apply(self, op: str, inputs: Sequence[Any], attrs: dict):
        raise NotImplementedError

    def __getattr__(self, item):
        if item.startswith("_"):
            raise AttributeError(item)
        raise ConfigurationError(f"Operación no soportada en el grafo: '{item}' (backend {self.name})")

    def scope(self, name: str):
        return contextlib.nullcontext()

    def dims(self, x) -> tuple[int, ...]:
        return dims_of(x)

    # --- convolución / normalización -------------------------------------

    def conv2d(self, x, spec: ConvSpec):
        inputs = [x, spec.weight] + ([spec.bias] if spec.bias is not None else [])
        attrs = {"stride": spec.stride, "padding": spec.padding, "groups": spec.groups}
        return self._apply("conv2d", inputs, attrs)

    def batchnorm(self, x, bn: BatchNormStats):
        return self._apply("batchnorm", [x, bn.gamma, bn.beta, bn.mean, bn.var], {"eps": bn.eps})

    def activation(self, x, kind: str):
        if kind not in ACTIVATIONS:
            raise ConfigurationError(f"activation: tipo desconocido '{kind}'")
        return self._apply(kind, [x], {})

    def relu(self, x):
        return self.activation(x, "relu")

    def sigmoid(self, x):
        return self.activation(x, "sigmoid")

    # --- redimensionado ---------------------------------------------------

    def avgpool_to(self, x, target):
        return self._apply("avgpool", [x], {"target": tuple(int(t) for t in target)})

    def bilinear_resize(self, x, target):
        return self._apply("bilinear", [x], {"target": tuple(int(t) for t in target)})

    def resize_to(self, x, target):
        """bilinear al agrandar, avgpool al reducir, identidad si coincide."""
        target = tuple(int(t) for t in target)
        _, _, h, w = self.dims(x)
        if target == (h, w):
            return x
        if target[0] <= h and target[1] <= w:
            return self.avgpool_to(x, target)
        return self.bilinear_resize(x, target)

    # --- canales ----------------------------------------------------------

    def concat_channels(self, inputs):
        return self._apply("concat", list(inputs), {})

    def slice_channels(self, x, start: int, stop: int):
        return self._apply("slice", [x], {"start": int(start), "stop": int(stop)})

    def split_channels(self, x, sizes):
        return [self.slice_channels(x, a, b) for a, b in shapes.split_offsets(self.dims(x), sizes)]

    # --- atención ---------------------------------------------------------

    def matmul_batched(self, a, b):
        return self._apply("matmul", [a, b], {})

    def softmax_lastdim(self, x):
        return self._apply("softmax", [x], {})

    # --- elemento a elemento / vistas --------------------------------------

    def add(self, a, b):
        return self._apply("add", [a, b], {})

    def mul(self, a, b):
        return self._apply("mul", [a, b], {})

    def scale(self, x, factor: float):
        return self._apply("scale", [x], {"factor": float(factor)})

    def reshape(self, x, dims):
        return self._apply("reshape", [x], {"dims": tuple(int(d) for d in dims)})

    def swap_last2(self, x):
        return self._apply("swap_last2", [x], {})

    # --- reducciones y pérdidas -------------------------------------------

    def sum_all(self, x):
        return self._apply("sum", [x], {})

    def mean_all(self, x):
        return self._apply("mean", [x], {})

    def bce_with_logits_mean(self, logits, target):
        return self._apply("bce_with_logits_mean", [logits, target], {})

    def masked_l1_mean(self, pred, target, mask):
        return self._apply("masked_l1_mean", [pred, target, mask], {})


# ============================================================================
# FORWARD NUMÉRICO (compartido por EagerOps y TracingOps)
# ============================================================================

def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if arr.ndim != 4:
        raise ConfigurationError(f"Se esperaba un tensor rank 4; recibido forma {arr.shape}")
    return Tensor(arr)


def _conv2d(inputs, attrs):
    x, w = as_tensor(inputs[0]), inputs[1]
    bias = inputs[2] if len(inputs) > 2 else None
    wd = dims_of(w)
    spec = ConvSpec(
        in_channels=wd[1] * attrs["groups"], out_channels=wd[0], kernel=(wd[2], wd[3]),
        weight=w, bias=bias, stride=attrs["stride"], padding=attrs["padding"], groups=attrs["groups"],
    )
    return kernels.conv2d(x, spec)


FORWARD: dict[str, Callable] = {
    "conv2d": _conv2d,
    "batchnorm": lambda i, a: kernels.batchnorm_infer(as_tensor(i[0]), *i[1:5], a["eps"]),
    "relu": lambda i, a: kernels.activation(as_tensor(i[0]), "relu"),
    "sigmoid": lambda i, a: kernels.activation(as_tensor(i[0]), "sigmoid"),
    "avgpool": lambda i, a: kernels.avgpool_to(as_tensor(i[0]), a["target"]),
    "bilinear": lambda i, a: kernels.bilinear_resize(as_tensor(i[0]), a["target"]),
    "concat": lambda i, a: kernels.concat_channels([as_tensor(v) for v in i]),
    "slice": lambda i, a: kernels.slice_channels(as_tensor(i[0]), a["start"], a["stop"]),
    "matmul": lambda i, a: kernels.matmul_batched(as_tensor(i[0]), as_tensor(i[1])),
    "softmax": lambda i, a: kernels.softmax_lastdim(as_tensor(i[0])),
    "add": lambda i, a: kernels.add(as_tensor(i[0]), as_tensor(i[1])),
    "mul": lambda i, a: kernels.mul(as_tensor(i[0]), as_tensor(i[1])),
    "scale": lambda i, a: kernels.scale(as_tensor(i[0]), a["factor"]),
    "reshape": lambda i, a: kernels.reshape(as_tensor(i[0]), a["dims"]),
    "swap_last2": lambda i, a: kernels.swap_last2(as_tensor(i[0])),
    "sum": lambda i, a: kernels.sum_all(i[0]),
    "mean": lambda i, a: kernels.mean_all(i[0]),
    "bce_with_logits_mean": lambda i, a: kernels.bce_with_logits_mean(as_tensor(i[0]), as_tensor(i[1])),
    "masked_l1_mean": lambda i, a: kernels.masked_l1_mean(*(as_tensor(v) for v in i)),
}


def forward_op(op: str, inputs: Sequence[Any], attrs: dict) -> Tensor:
    fn = FORWARD.get(op)
    if fn is None:
        raise ConfigurationError(f"Operación no soportada: '{op}'")
    return fn(list(inputs), attrs)


class EagerOps(Ops):
    """Backend numérico: sin estado, seguro para uso concurrente."""

    name = "eager"

    def _apply(self, op, inputs, attrs):
        return forward_op(op, inputs, attrs)


EAGER = EagerOps()


def run_graph(graph: Callable, inputs, params, ops: Ops = None):
    """Forward sin trazar de `graph` con los parámetros de `params` (store o vista)."""
    return graph(ops or EAGER, inputs, as_view(params))
