"""
Almacén de parámetros con nombre y las vistas con que los composites los leen.

Un composite nunca toca el almacén directamente: pide cada tensor con
`view.require(nombre, forma, init)`. Según la vista, obtiene el arreglo guardado,
un arreglo recién inicializado, una hoja trazada o solo su forma.
"""
from __future__ import annotations

import math
from collections.abc import MutableMapping
from typing import Any, Iterator, Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError

# Sufijos que el entrenador nunca actualiza (estadísticas de batchnorm congeladas)
FROZEN_SUFFIXES = (".running_mean", ".running_var")


class ParamStore(MutableMapping):
    """
    Mapa nombre -> arreglo float32 (o float64 en precisión de verificación).

    La iteración siempre es en orden lexicográfico por nombre.
    """

    def __init__(self, entries=None, dtype=np.float32):
        self._dtype = np.dtype(dtype)
        self._data: dict[str, np.ndarray] = {}
        for name, value in (entries or {}).items():
            self[name] = value

    @property
    def dtype(self):
        return self._dtype

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __setitem__(self, name: str, value) -> None:
        if not isinstance(name, str) or not name:
            raise ConfigurationError(f"Nombre de parámetro inválido: {name!r}")
        self._data[name] = np.array(value, dtype=self._dtype, copy=True, order="C")

    def __delitem__(self, name: str) -> None:
        del self._data[name]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._data))

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self):
        return f"ParamStore({len(self)} tensores, {self.numel()} floats)"

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self if matches_prefix(n, prefix)]

    def numel(self, prefix: str = "") -> int:
        return int(sum(self._data[n].size for n in self.names(prefix)))

    def copy(self, dtype=None) -> "ParamStore":
        return ParamStore(self._data, dtype=dtype or self._dtype)

    def trainable(self) -> list[str]:
        return [n for n in self if not n.endswith(FROZEN_SUFFIXES)]

    def equals(self, other: "ParamStore") -> bool:
        """Igualdad bit a bit (mismos nombres, formas y bytes)."""
        if list(self) != list(other):
            return False
        return all(
            self[n].shape == other[n].shape and self[n].tobytes() == other[n].tobytes()
            for n in self
        )


def matches_prefix(name: str, prefix: str) -> bool:
    if not prefix:
        return True
    return name == prefix or name.startswith(prefix + ".")


# ============================================================================
# VISTAS
# ============================================================================

class ShapeValue:
    """Valor de solo forma: lo usan el contador de FLOPs y la vista de formas."""

    __slots__ = ("shape",)

    def __init__(self, shape):
        self.shape = tuple(int(d) for d in shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def __repr__(self):
        return f"ShapeValue{self.shape}"


class ParamView:
    """Interfaz común de las vistas de parámetros."""

    def require(self, name: str, shape, init: str = "conv") -> Any:
        raise NotImplementedError

    def has(self, name: str) -> bool:
        raise NotImplementedError


def _check_shape(name, got, expected):
    if tuple(got) != tuple(expected):
        raise ConfigurationError(
            f"Parámetro '{name}' con forma {tuple(got)}; el módulo espera {tuple(expected)}",
            key=name,
        )


def _module_of(name: str) -> str:
    return name.rsplit(".", 1)[0] if "." in name else name


class StoreView(ParamView):
    """Lee un ParamStore existente; un nombre faltante es un error que nombra al módulo."""

    def __init__(self, store: ParamStore):
        self.store = store

    def require(self, name, shape, init="conv"):
        if name not in self.store:
            raise ConfigurationError(
                f"Faltan parámetros del módulo '{_module_of(name)}' (no existe '{name}')",
                key=name,
            )
        value = self.store[name]
        _check_shape(name, value.shape, shape)
        return value

    def has(self, name):
        return name in self.store


def initial_value(rng: np.random.Generator, shape, init: str, dtype=np.float32) -> np.ndarray:
    """
    Valor inicial determinista de un parámetro.

    - conv: He-normal, std = sqrt(2 / fan_in) con fan_in = in/groups * kh * kw
    - zeros / ones: constantes (bias, beta, running_mean / gamma, running_var)
    """
    shape = tuple(int(d) for d in shape)
    if init == "conv":
        fan_in = math.prod(shape[1:]) if len(shape) > 1 else 1
        return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)
    if init == "zeros":
        return np.zeros(shape, dtype=dtype)
    if init == "ones":
        return np.ones(shape, dtype=dtype)
    raise ConfigurationError(f"Inicialización desconocida '{init}' para la forma {shape}")


class InitView(ParamView):
    """Crea cada parámetro la primera vez que se pide, en orden de llamada."""

    def __init__(self, seed: int = 0, store: Optional[ParamStore] = None):
        self.rng = np.random.default_rng(seed)
        self.store = store if store is not None else ParamStore()

    def require(self, name, shape, init="conv"):
        if name in self.store:
            value = self.store[name]
            _check_shape(name, value.shape, shape)
            return value
        self.store[name] = initial_value(self.rng, shape, init, self.store.dtype)
        return self.store[name]

    def has(self, name):
        return name in self.store


class ShapeView(ParamView):
    """
    Devuelve solo formas. Sin almacén, todo parámetro pedido "existe" con la forma
    declarada (permite contar FLOPs de la forma fusionada sin fusionar nada).
    """

    def __init__(self, store: Optional[ParamStore] = None):
        self.store = store
        self.seen: dict[str, tuple[int, ...]] = {}

    def require(self, name, shape, init="conv"):
        if self.store is not None:
            if name not in self.store:
                raise ConfigurationError(
                    f"Faltan parámetros del módulo '{_module_of(name)}' (no existe '{name}')",
                    key=name,
                )
            _check_shape(name, self.store[name].shape, shape)
        self.seen[name] = tuple(int(d) for d in shape)
        return ShapeValue(shape)

    def has(self, name):
        return True if self.store is None else name in self.store


def as_view(params) -> ParamView:
    """Acepta una vista o un ParamStore (que se envuelve en StoreView)."""
    if isinstance(params, ParamView):
        return params
    if isinstance(params, ParamStore):
        return StoreView(params)
    if isinstance(params, dict):
        return StoreView(ParamStore(params))
    raise ConfigurationError(f"Se esperaba ParamStore o ParamView; recibido {type(params).__name__}")


def init_params(graph, input_dims, seed: int = 0) -> ParamStore:
    """
    Crea todos los parámetros que usa `graph` ejecutándolo sobre el backend de formas.

    Args:
        graph: callable graph(ops, inputs, params)
        input_dims: estructura de entradas (dict/list/FeaturePyramid) con dims en lugar de tensores
        seed: semilla del generador He-normal
    """
    from GoldNeck.analysis.counters import ShapeOps, shape_inputs

    view = InitView(seed)
    graph(ShapeOps(), shape_inputs(input_dims), view)
    return view.store
