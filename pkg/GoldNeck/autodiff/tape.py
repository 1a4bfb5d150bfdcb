"""
Diferenciación en modo reverso sobre el conjunto de operaciones de GoldNeck.

forward_traced ejecuta el grafo con TracingOps: cada operación se calcula con los
mismos kernels que el forward normal (salida bit a bit igual) y se graba como un
TapeNode. backward recorre la cinta en orden inverso aplicando las reglas de
autodiff.rules.
"""
from __future__ import annotations

import contextlib
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from GoldNeck.autodiff.rules import RULES
from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import Ops, flatten_structure, forward_op, map_structure
from GoldNeck.params import ParamStore, ParamView, StoreView
from GoldNeck.tensor.core import COMPUTE_DTYPE, dims_of, storage_dtype
from GoldNeck.tensor.shapes import SCALAR_DIMS

logger = logging.getLogger(__name__)

LEAF_KINDS = ("param", "input", "const")


@dataclass
class TapeNode:
    """Una operación grabada: sus entradas siempre preceden al nodo en la cinta."""
    op: str
    inputs: tuple[int, ...]
    attrs: dict
    dims: tuple[int, ...]
    name: str = ""
    scope: str = ""

    @property
    def is_leaf(self) -> bool:
        return self.op in LEAF_KINDS


class Node:
    """Referencia a un valor de la cinta; es lo que reciben los composites al trazar."""

    __slots__ = ("tape_index", "value", "tape")

    def __init__(self, tape: "Tape", index: int, value):
        self.tape = tape
        self.tape_index = index
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return dims_of(self.value)

    def __repr__(self):
        return f"Node(#{self.tape_index}, {self.tape.nodes[self.tape_index].op}, dims={self.shape})"


class Tape:
    """Secuencia de TapeNode más los valores forward guardados."""

    def __init__(self, param_shapes: Optional[dict] = None):
        self.nodes: list[TapeNode] = []
        self.values: list[Any] = []
        self.param_shapes = dict(param_shapes or {})
        self.output = None
        self.output_index: Optional[int] = None

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, attrs, value, name="", scope="") -> Node:
        index = len(self.nodes)
        self.nodes.append(TapeNode(op, tuple(inputs), dict(attrs), dims_of(value), name, scope))
        self.values.append(value)
        return Node(self, index, value)

    def leaves(self, kind: str) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.op == kind]

    def param_index(self) -> dict[str, int]:
        return {self.nodes[i].name: i for i in self.leaves("param")}

    def replay(self, params=None, inputs: Optional[dict] = None) -> list:
        """
        Re-ejecuta la cinta con otros valores de parámetros (y opcionalmente de entradas).

        Args:
            params: ParamStore/mapa nombre -> arreglo; None reutiliza los valores grabados
            inputs: mapa ruta -> valor para las hojas de entrada

        Returns:
            lista de valores, uno por nodo
        """
        values = []
        for i, node in enumerate(self.nodes):
            if node.op == "param" and params is not None:
                values.append(params[node.name])
            elif node.op == "input" and inputs is not None and node.name in inputs:
                values.append(inputs[node.name])
            elif node.is_leaf:
                values.append(self.values[i])
            else:
                values.append(forward_op(node.op, [values[j] for j in node.inputs], node.attrs))
        return values


# ============================================================================
# BACKEND DE TRAZADO
# ============================================================================

class TracingOps(Ops):
    """Calcula como EagerOps y además graba cada operación en la cinta."""

    name = "tracing"

    def __init__(self, tape: Tape):
        self.tape = tape
        self._scopes: list[str] = []

    @contextlib.contextmanager
    def scope(self, name):
        self._scopes.append(name)
        try:
            yield
        finally:
            self._scopes.pop()

    def _index_of(self, value) -> int:
        if isinstance(value, Node) and value.tape is self.tape:
            return value.tape_index
        # constante no trazada (p.ej. un arreglo fijo dentro del grafo)
        return self.tape.record("const", (), {}, value).tape_index

    def _apply(self, op, inputs, attrs):
        indices = [self._index_of(v) for v in inputs]
        value = forward_op(op, [self.tape.values[j] for j in indices], attrs)
        scope = self._scopes[-1] if self._scopes else ""
        return self.tape.record(op, indices, attrs, value, scope=scope)


class TracedView(ParamView):
    """Devuelve hojas de parámetro de la cinta (una por nombre)."""

    def __init__(self, tape: Tape, store: ParamStore):
        self.tape = tape
        self.store = store
        self._base = StoreView(store)
        self._nodes: dict[str, Node] = {}

    def require(self, name, shape, init="conv"):
        if name not in self._nodes:
            value = self._base.require(name, shape, init)
            self._nodes[name] = self.tape.record("param", (), {}, value, name=name)
        return self._nodes[name]

    def has(self, name):
        return name in self.store


def _as_store(params) -> ParamStore:
    if isinstance(params, ParamStore):
        return params
    if isinstance(params, StoreView):
        return params.store
    if isinstance(params, dict):
        return ParamStore(params, dtype=storage_dtype())
    raise ConfigurationError(f"forward_traced requiere un ParamStore; recibido {type(params).__name__}")


def forward_traced(graph, inputs, params):
    """
    Forward trazado de `graph`.

    Returns:
        (salida con los mismos valores que el forward normal, cinta)
    """
    store = _as_store(params)
    tape = Tape({n: store[n].shape for n in store})

    paths = iter([p for p, _ in flatten_structure(inputs)])
    traced_inputs = map_structure(
        lambda v: tape.record("input", (), {}, v, name=next(paths)), inputs,
    )
    out = graph(TracingOps(tape), traced_inputs, TracedView(tape, store))

    tape.output = out
    if isinstance(out, Node):
        tape.output_index = out.tape_index
    values = map_structure(lambda n: n.value if isinstance(n, Node) else n, out)
    logger.debug(f"🔍 Cinta grabada: {len(tape)} nodos, {len(tape.leaves('param'))} parámetros")
    return values, tape


# ============================================================================
# BACKWARD
# ============================================================================

class GradientSet(Mapping):
    """Mapa nombre de parámetro -> gradiente con la forma del parámetro."""

    def __init__(self, grads: dict[str, np.ndarray], inputs: Optional[dict[str, np.ndarray]] = None):
        self._grads = grads
        self.inputs = inputs or {}

    def __getitem__(self, name):
        return self._grads[name]

    def __iter__(self):
        return iter(sorted(self._grads))

    def __len__(self):
        return len(self._grads)

    def global_norm(self, names=None) -> float:
        names = list(self) if names is None else names
        return float(np.sqrt(sum(float(np.sum(self._grads[n].astype(COMPUTE_DTYPE) ** 2)) for n in names)))

    def equals(self, other: "GradientSet") -> bool:
        return list(self) == list(other) and all(
            self[n].tobytes() == other[n].tobytes() for n in self
        )


def _seed(dims, loss_grad) -> np.ndarray:
    seed = np.asarray(loss_grad, dtype=COMPUTE_DTYPE)
    if seed.size != 1:
        raise ConfigurationError(f"backward: la semilla debe ser escalar; recibida forma {seed.shape}")
    return np.full(dims, float(seed.reshape(-1)[0]), dtype=COMPUTE_DTYPE)


def backward(tape: Tape, loss_grad=1.0) -> GradientSet:
    """
    Propaga el gradiente de una pérdida escalar hasta las hojas.

    Los parámetros del almacén que el grafo no usa reciben gradiente cero exacto.
    No modifica la cinta: dos llamadas seguidas devuelven lo mismo.

    Raises:
        ConfigurationError: la salida trazada no es un escalar (1, 1, 1, 1)
    """
    if tape.output_index is None:
        raise ConfigurationError("backward: la salida del grafo no es un único tensor escalar")
    out_dims = tape.nodes[tape.output_index].dims
    if tuple(out_dims) != SCALAR_DIMS:
        raise ConfigurationError(f"backward: la pérdida debe ser escalar; la salida tiene dims {out_dims}")

    grads: list[Optional[np.ndarray]] = [None] * len(tape)
    grads[tape.output_index] = _seed(out_dims, loss_grad)

    for i in range(tape.output_index, -1, -1):
        g = grads[i]
        node = tape.nodes[i]
        if g is None or node.is_leaf:
            continue
        rule = RULES.get(node.op)
        if rule is None:
            raise ConfigurationError(f"backward: sin regla para la operación '{node.op}'")
        in_values = [tape.values[j] for j in node.inputs]
        for j, gj in zip(node.inputs, rule(g, in_values, tape.values[i], node.attrs)):
            if gj is None:
                continue
            grads[j] = gj if grads[j] is None else grads[j] + gj

    dtype = storage_dtype()
    params = {name: np.zeros(shape, dtype=dtype) for name, shape in tape.param_shapes.items()}
    for name, idx in tape.param_index().items():
        if grads[idx] is not None:
            params[name] = grads[idx].reshape(tape.nodes[idx].dims).astype(dtype)
    inputs = {
        tape.nodes[i].name: grads[i].astype(dtype)
        for i in tape.leaves("input") if grads[i] is not None
    }
    return GradientSet(params, inputs)
