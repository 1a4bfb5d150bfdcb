"""
Inferencia y validación de formas, compartida por los kernels y el contador de FLOPs.

Todas las funciones trabajan sobre tuplas de dims y lanzan ConfigurationError
nombrando la dim problemática.
"""
from __future__ import annotations

import math
from typing import Sequence

from GoldNeck.exceptions import ConfigurationError

SCALAR_DIMS = (1, 1, 1, 1)


def _rank4(dims, what="input"):
    if len(dims) != 4:
        raise ConfigurationError(f"{what} debe ser rank 4 (n, c, h, w); recibido {tuple(dims)}")


def conv2d_dims(x, in_channels, out_channels, kernel, stride, padding, groups):
    _rank4(x)
    n, c, h, w = x
    if c != in_channels:
        raise ConfigurationError(f"conv2d: input.c={c} pero in_channels={in_channels}")
    kh, kw = kernel
    out = []
    for axis, size, k in (("h", h, kh), ("w", w, kw)):
        span = size + 2 * padding - k
        if span < 0:
            raise ConfigurationError(f"conv2d: kernel {k} mayor que {axis}={size} con padding {padding}")
        if span % stride:
            raise ConfigurationError(
                f"conv2d: tamaño de salida no entero en {axis}: ({size} + 2*{padding} - {k})/{stride} + 1"
            )
        out.append(span // stride + 1)
    return (n, out_channels, out[0], out[1])


def batchnorm_dims(x, *vectors):
    _rank4(x)
    for name, v in zip(("gamma", "beta", "mean", "var"), vectors):
        if tuple(v) != (x[1],):
            raise ConfigurationError(f"batchnorm: {name} tiene forma {tuple(v)}; se esperaba ({x[1]},)")
    return tuple(x)


def elementwise_dims(a, b, op="add"):
    if tuple(a) != tuple(b):
        raise ConfigurationError(f"{op}: dims distintas {tuple(a)} vs {tuple(b)}")
    return tuple(a)


def avgpool_dims(x, target):
    _rank4(x)
    th, tw = target
    if th < 1 or tw < 1:
        raise ConfigurationError(f"avgpool_to: target inválido {tuple(target)}")
    if th > x[2] or tw > x[3]:
        raise ConfigurationError(
            f"avgpool_to: target {tuple(target)} mayor que la entrada {(x[2], x[3])}; usar bilinear_resize"
        )
    return (x[0], x[1], th, tw)


def bilinear_dims(x, target):
    _rank4(x)
    th, tw = target
    if th < 1 or tw < 1:
        raise ConfigurationError(f"bilinear_resize: target inválido {tuple(target)}")
    return (x[0], x[1], th, tw)


def pool_windows(size: int, target: int) -> list[tuple[int, int]]:
    """Ventanas [floor(i*size/target), ceil((i+1)*size/target)) de la partición adaptativa."""
    return [
        ((i * size) // target, -((-(i + 1) * size) // target))
        for i in range(target)
    ]


def concat_dims(inputs: Sequence[tuple]):
    if not inputs:
        raise ConfigurationError("concat_channels: lista de entradas vacía")
    first = inputs[0]
    _rank4(first)
    for i, d in enumerate(inputs[1:], start=1):
        _rank4(d)
        if (d[0], d[2], d[3]) != (first[0], first[2], first[3]):
            raise ConfigurationError(
                f"concat_channels: la entrada {i} tiene (n, h, w)={(d[0], d[2], d[3])}; "
                f"se esperaba {(first[0], first[2], first[3])}"
            )
    return (first[0], sum(d[1] for d in inputs), first[2], first[3])


def split_offsets(x, sizes: Sequence[int]) -> list[tuple[int, int]]:
    _rank4(x)
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigurationError(f"split_channels: tamaños inválidos {sizes}")
    if sum(sizes) != x[1]:
        raise ConfigurationError(f"split_channels: los tamaños suman {sum(sizes)}; se esperaba {x[1]}")
    offsets, start = [], 0
    for s in sizes:
        offsets.append((start, start + s))
        start += s
    return offsets


def slice_dims(x, start, stop):
    _rank4(x)
    if not (0 <= start < stop <= x[1]):
        raise ConfigurationError(f"slice_channels: rango [{start}, {stop}) fuera de c={x[1]}")
    return (x[0], stop - start, x[2], x[3])


def matmul_dims(a, b):
    _rank4(a, "a")
    _rank4(b, "b")
    if a[:2] != b[:2]:
        raise ConfigurationError(f"matmul_batched: lotes distintos {a[:2]} vs {b[:2]}")
    if a[3] != b[2]:
        raise ConfigurationError(f"matmul_batched: dim interna {a[3]} vs {b[2]}")
    return (a[0], a[1], a[2], b[3])


def reshape_dims(x, dims):
    dims = tuple(int(d) for d in dims)
    _rank4(dims, "reshape target")
    if any(d < 1 for d in dims):
        raise ConfigurationError(f"reshape: dims inválidas {dims}")
    if math.prod(x) != math.prod(dims):
        raise ConfigurationError(f"reshape: {tuple(x)} no se puede ver como {dims}")
    return dims


def swap_last2_dims(x):
    _rank4(x)
    return (x[0], x[1], x[3], x[2])


def masked_dims(pred, target, mask=None, op="loss"):
    elementwise_dims(pred, target, op)
    if mask is not None:
        elementwise_dims(pred, mask, op)
    return SCALAR_DIMS
