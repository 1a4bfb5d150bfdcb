"""
Tipos base del motor: Tensor NCHW, ConvSpec y estadísticas de batchnorm.

El Tensor guarda float32 contiguo (row-major). Los kernels acumulan en float64 y
vuelven a float32 al escribir el resultado; dentro de `verification_precision()`
el almacenamiento pasa a float64 (solo lo usa el harness de diferencias finitas).
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.settings import BN_EPS

COMPUTE_DTYPE = np.float64

_storage_dtype: ContextVar[type] = ContextVar("goldneck_storage_dtype", default=np.float32)


def storage_dtype():
    """dtype con el que se materializan tensores y gradientes en el contexto actual."""
    return _storage_dtype.get()


@contextmanager
def verification_precision():
    """Almacena en float64 mientras dure el bloque (harness de gradientes)."""
    token = _storage_dtype.set(np.float64)
    try:
        yield
    finally:
        _storage_dtype.reset(token)


# ============================================================================
# PARALELISMO INTERNO (particiona elementos de salida, nunca reducciones)
# ============================================================================

_threads_lock = threading.Lock()
_num_threads = 1
_executor: Optional[ThreadPoolExecutor] = None


def set_num_threads(n: int) -> None:
    global _num_threads, _executor
    if int(n) < 1:
        raise ConfigurationError(f"threads debe ser >= 1 (recibido {n})", key="threads")
    with _threads_lock:
        if _executor is not None and int(n) != _num_threads:
            _executor.shutdown(wait=True)
            _executor = None
        _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def get_executor() -> Optional[ThreadPoolExecutor]:
    global _executor
    if _num_threads <= 1:
        return None
    with _threads_lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=_num_threads, thread_name_prefix="goldneck-op")
        return _executor


# ============================================================================
# TENSOR
# ============================================================================

class Tensor:
    """
    Arreglo denso rank-4 (n, c, h, w) de floats.

    El elemento (i, j, y, x) está en ((i*c + j)*h + y)*w + x del buffer plano.
    Los datos son de solo lectura: los kernels siempre devuelven tensores nuevos.
    """

    __slots__ = ("_data",)

    def __init__(self, data, copy: bool = True):
        arr = np.array(data, dtype=storage_dtype(), copy=True) if copy else data
        if arr.ndim != 4:
            raise ConfigurationError(f"Tensor requiere rank 4 (n, c, h, w); recibido rank {arr.ndim}")
        if any(d < 1 for d in arr.shape):
            raise ConfigurationError(f"Todas las dims deben ser >= 1; recibido {tuple(arr.shape)}")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Envuelve un resultado recién calculado, convirtiendo al dtype de almacenamiento."""
        return cls(np.ascontiguousarray(arr, dtype=storage_dtype()), copy=False)

    @classmethod
    def from_flat(cls, dims, buffer) -> "Tensor":
        flat = np.asarray(buffer, dtype=storage_dtype())
        expected = int(np.prod(dims))
        if flat.size != expected:
            raise ConfigurationError(f"El buffer tiene {flat.size} elementos; dims {tuple(dims)} requieren {expected}")
        return cls(flat.reshape(tuple(int(d) for d in dims)))

    @classmethod
    def zeros(cls, dims) -> "Tensor":
        return cls(np.zeros(tuple(dims), dtype=storage_dtype()), copy=False)

    @classmethod
    def full(cls, dims, value: float) -> "Tensor":
        return cls(np.full(tuple(dims), value, dtype=storage_dtype()), copy=False)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(int(d) for d in self._data.shape)

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def c(self) -> int:
        return self._data.shape[1]

    @property
    def h(self) -> int:
        return self._data.shape[2]

    @property
    def w(self) -> int:
        return self._data.shape[3]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.h, self.w

    @property
    def numel(self) -> int:
        return int(self._data.size)

    def flat(self) -> np.ndarray:
        return self._data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def __repr__(self):
        return f"Tensor(dims={self.dims}, dtype={self._data.dtype})"


def dims_of(value: Any) -> tuple[int, ...]:
    """Dims de un valor de cualquier backend (Tensor, ndarray, nodo trazado o forma)."""
    if isinstance(value, Tensor):
        return value.dims
    if isinstance(value, np.ndarray):
        return tuple(int(d) for d in value.shape)
    shape = getattr(value, "shape", None)
    if shape is not None:
        return tuple(int(d) for d in shape)
    raise ConfigurationError(f"No se pueden obtener las dims de {type(value).__name__}")


def as_compute(value: Any) -> np.ndarray:
    """Arreglo float64 para acumular (acepta Tensor, ndarray o escalares)."""
    if isinstance(value, Tensor):
        return value.data.astype(COMPUTE_DTYPE)
    return np.asarray(value, dtype=COMPUTE_DTYPE)


# ============================================================================
# ESPECIFICACIONES DE MÓDULOS
# ============================================================================

@dataclass(frozen=True)
class ConvSpec:
    """
    Geometría y pesos de una convolución 2D (correlación cruzada, sin flip del kernel).

    weight tiene forma (out, in/groups, kh, kw); bias (out,) es opcional.
    weight/bias pueden ser ndarray, nodos trazados o formas según el backend.
    """
    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    weight: Any
    bias: Any = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigurationError(
                f"in_channels={self.in_channels} y out_channels={self.out_channels} "
                f"deben ser divisibles por groups={self.groups}"
            )
        if self.stride < 1:
            raise ConfigurationError(f"stride debe ser >= 1 (recibido {self.stride})")
        if self.padding < 0:
            raise ConfigurationError(f"padding debe ser >= 0 (recibido {self.padding})")
        expected = (self.out_channels, self.in_channels // self.groups, *self.kernel)
        got = dims_of(self.weight)
        if got != expected:
            raise ConfigurationError(f"weight con forma {got}; se esperaba {expected}")
        if self.bias is not None and dims_of(self.bias) != (self.out_channels,):
            raise ConfigurationError(
                f"bias con forma {dims_of(self.bias)}; se esperaba ({self.out_channels},)"
            )

    @property
    def geometry(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": tuple(self.kernel),
            "stride": self.stride,
            "padding": self.padding,
            "groups": self.groups,
        }


@dataclass(frozen=True)
class BatchNormStats:
    """Vectores por canal de un batchnorm en modo inferencia."""
    gamma: Any
    beta: Any
    mean: Any
    var: Any
    eps: float = BN_EPS

    @property
    def channels(self) -> int:
        return dims_of(self.gamma)[0]
