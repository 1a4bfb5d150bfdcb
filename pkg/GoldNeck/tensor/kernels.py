"""
Kernels NCHW del motor.

Todas las funciones son puras: reciben tensores/arreglos inmutables y devuelven
tensores nuevos. La acumulación se hace en float64 con un orden fijo, así que
la misma entrada produce siempre los mismos bits (con 1 o N hilos).
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Sequence

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.tensor import shapes
from GoldNeck.tensor.core import (
    COMPUTE_DTYPE,
    BatchNormStats,
    ConvSpec,
    Tensor,
    as_compute,
    dims_of,
    get_executor,
    storage_dtype,
)

# Bloque fijo de canales de salida: la partición no depende del número de hilos.
CONV_CHANNEL_BLOCK = 32


# ============================================================================
# CONVOLUCIÓN
# ============================================================================

def _conv_block(xg, wg, g, o0, o1, kernel, stride, out_hw):
    """Canales de salida [o0, o1) del grupo g; reduce sobre (ky, kx) en orden fijo."""
    kh, kw = kernel
    oh, ow = out_hw
    n = xg.shape[0]
    acc = np.zeros((o1 - o0, n, oh, ow), dtype=COMPUTE_DTYPE)
    for ky in range(kh):
        for kx in range(kw):
            patch = xg[:, g, :, ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride]
            acc += np.tensordot(wg[g, o0:o1, :, ky, kx], patch, axes=([1], [1]))
    return acc.transpose(1, 0, 2, 3)


def _conv_depthwise(xg, wg, kernel, stride, out_hw):
    kh, kw = kernel
    oh, ow = out_hw
    n, g = xg.shape[:2]
    acc = np.zeros((n, g, oh, ow), dtype=COMPUTE_DTYPE)
    for ky in range(kh):
        for kx in range(kw):
            patch = xg[:, :, 0, ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride]
            acc += patch * wg[:, 0, 0, ky, kx][None, :, None, None]
    return acc


def conv2d(input: Tensor, spec: ConvSpec) -> Tensor:
    """
    Convolución directa (correlación cruzada) con stride, padding y grupos.

    Raises:
        ConfigurationError: input.c distinto de in_channels o salida no entera
    """
    n, out_c, oh, ow = shapes.conv2d_dims(
        input.dims, spec.in_channels, spec.out_channels, spec.kernel,
        spec.stride, spec.padding, spec.groups,
    )
    p = spec.padding
    x = as_compute(input)
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    g = spec.groups
    cin_g, cout_g = spec.in_channels // g, spec.out_channels // g
    xg = x.reshape(n, g, cin_g, x.shape[2], x.shape[3])
    wg = as_compute(spec.weight).reshape(g, cout_g, cin_g, *spec.kernel)

    if cin_g == 1 and cout_g == 1:
        out = _conv_depthwise(xg, wg, spec.kernel, spec.stride, (oh, ow))
    else:
        jobs = [
            (gi, o0, min(o0 + CONV_CHANNEL_BLOCK, cout_g))
            for gi in range(g)
            for o0 in range(0, cout_g, CONV_CHANNEL_BLOCK)
        ]
        executor = get_executor()
        run = lambda job: _conv_block(xg, wg, job[0], job[1], job[2], spec.kernel, spec.stride, (oh, ow))
        blocks = list(executor.map(run, jobs)) if executor is not None and len(jobs) > 1 else [run(j) for j in jobs]
        out = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]

    if spec.bias is not None:
        out = out + as_compute(spec.bias)[None, :, None, None]
    return Tensor.wrap(out)


# ============================================================================
# NORMALIZACIÓN Y ACTIVACIONES
# ============================================================================

def batchnorm_infer(input: Tensor, gamma, beta, mean, var, eps: float) -> Tensor:
    """y = gamma*(x - mean)/sqrt(var + eps) + beta, por canal, con estadísticas guardadas."""
    shapes.batchnorm_dims(input.dims, dims_of(gamma), dims_of(beta), dims_of(mean), dims_of(var))
    if eps <= 0:
        raise ConfigurationError(f"batchnorm: eps debe ser > 0 (recibido {eps})")
    v = as_compute(var)
    if np.any(v < 0):
        raise ConfigurationError("batchnorm: var debe ser >= 0")
    x = as_compute(input)
    per_c = lambda a: as_compute(a)[None, :, None, None]
    y = per_c(gamma) * (x - per_c(mean)) / np.sqrt(per_c(var) + eps) + per_c(beta)
    return Tensor.wrap(y)


def batchnorm(input: Tensor, bn: BatchNormStats) -> Tensor:
    return batchnorm_infer(input, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps)


def _open_unit_interval(y: np.ndarray) -> np.ndarray:
    info = np.finfo(storage_dtype())
    return np.clip(y, info.tiny, 1.0 - info.epsneg)


def activation(input: Tensor, kind: str) -> Tensor:
    """relu o sigmoid elemento a elemento; la sigmoide queda estrictamente en (0, 1)."""
    x = as_compute(input)
    if kind == "relu":
        return Tensor.wrap(np.maximum(x, 0.0))
    if kind == "sigmoid":
        with np.errstate(over="ignore"):
            y = 1.0 / (1.0 + np.exp(-x))
        return Tensor.wrap(_open_unit_interval(y))
    raise ConfigurationError(f"activation: tipo desconocido '{kind}'")


def relu(input: Tensor) -> Tensor:
    return activation(input, "relu")


def sigmoid(input: Tensor) -> Tensor:
    return activation(input, "sigmoid")


# ============================================================================
# REDIMENSIONADO
# ============================================================================

@lru_cache(maxsize=256)
def avgpool_matrix(size: int, target: int) -> np.ndarray:
    """Matriz (target, size) de la partición adaptativa floor/ceil."""
    m = np.zeros((target, size), dtype=COMPUTE_DTYPE)
    for i, (a, b) in enumerate(shapes.pool_windows(size, target)):
        m[i, a:b] = 1.0 / (b - a)
    m.flags.writeable = False
    return m


@lru_cache(maxsize=256)
def bilinear_matrix(size: int, target: int) -> np.ndarray:
    """Matriz (target, size) de muestreo con centros de píxel y recorte a bordes."""
    m = np.zeros((target, size), dtype=COMPUTE_DTYPE)
    scale = size / target
    for d in range(target):
        src = min(max((d + 0.5) * scale - 0.5, 0.0), size - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, size - 1)
        frac = src - i0
        m[d, i0] += 1.0 - frac
        m[d, i1] += frac
    m.flags.writeable = False
    return m


def _separable(x: np.ndarray, mh: np.ndarray, mw: np.ndarray) -> np.ndarray:
    return np.matmul(mh, np.matmul(x, mw.T))


def avgpool_to(input: Tensor, target: tuple[int, int]) -> Tensor:
    """Average pooling adaptativo hacia (h', w') <= (h, w)."""
    n, c, th, tw = shapes.avgpool_dims(input.dims, target)
    if (th, tw) == input.spatial:
        return Tensor(input.data)
    x = as_compute(input)
    return Tensor.wrap(_separable(x, avgpool_matrix(input.h, th), avgpool_matrix(input.w, tw)))


def bilinear_resize(input: Tensor, target: tuple[int, int]) -> Tensor:
    """Interpolación bilineal con centros de píxel: src = (dst + 0.5)*escala - 0.5."""
    n, c, th, tw = shapes.bilinear_dims(input.dims, target)
    if (th, tw) == input.spatial:
        return Tensor(input.data)
    x = as_compute(input)
    return Tensor.wrap(_separable(x, bilinear_matrix(input.h, th), bilinear_matrix(input.w, tw)))


def resize_to(input: Tensor, target: tuple[int, int]) -> Tensor:
    """avgpool_to si reduce en ambos ejes, identidad si coincide, bilinear en otro caso."""
    th, tw = target
    if (th, tw) == input.spatial:
        return Tensor(input.data)
    if th <= input.h and tw <= input.w:
        return avgpool_to(input, target)
    return bilinear_resize(input, target)


# ============================================================================
# CANALES
# ============================================================================

def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    shapes.concat_dims([t.dims for t in inputs])
    return Tensor(np.concatenate([t.data for t in inputs], axis=1), copy=False)


def slice_channels(input: Tensor, start: int, stop: int) -> Tensor:
    shapes.slice_dims(input.dims, start, stop)
    return Tensor(input.data[:, start:stop])


def split_channels(input: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    return [slice_channels(input, a, b) for a, b in shapes.split_offsets(input.dims, sizes)]


# ============================================================================
# ATENCIÓN
# ============================================================================

def matmul_batched(a: Tensor, b: Tensor) -> Tensor:
    """(n, c, m, k) @ (n, c, k, p) -> (n, c, m, p); acumula en k ascendente."""
    shapes.matmul_dims(a.dims, b.dims)
    x, y = as_compute(a), as_compute(b)
    out = np.zeros((x.shape[0], x.shape[1], x.shape[2], y.shape[3]), dtype=COMPUTE_DTYPE)
    for k in range(x.shape[3]):
        out += x[:, :, :, k:k + 1] * y[:, :, k:k + 1, :]
    return Tensor.wrap(out)


def softmax_lastdim(input: Tensor) -> Tensor:
    """Softmax estable (resta del máximo) sobre el último eje."""
    x = as_compute(input)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return Tensor.wrap(np.maximum(y, np.finfo(storage_dtype()).tiny))


# ============================================================================
# ELEMENTO A ELEMENTO Y VISTAS
# ============================================================================

def add(a: Tensor, b: Tensor) -> Tensor:
    shapes.elementwise_dims(a.dims, b.dims, "add")
    return Tensor.wrap(as_compute(a) + as_compute(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    shapes.elementwise_dims(a.dims, b.dims, "mul")
    return Tensor.wrap(as_compute(a) * as_compute(b))


def scale(input: Tensor, factor: float) -> Tensor:
    return Tensor.wrap(as_compute(input) * float(factor))


def reshape(input: Tensor, dims) -> Tensor:
    dims = shapes.reshape_dims(input.dims, dims)
    return Tensor(input.data.reshape(dims))


def swap_last2(input: Tensor) -> Tensor:
    shapes.swap_last2_dims(input.dims)
    return Tensor(input.data.transpose(0, 1, 3, 2))


# ============================================================================
# REDUCCIONES Y PÉRDIDAS DEL ENTRENADOR
# ============================================================================

def _scalar(value: float) -> Tensor:
    return Tensor.wrap(np.full(shapes.SCALAR_DIMS, value, dtype=COMPUTE_DTYPE))


def sum_all(input) -> Tensor:
    return _scalar(as_compute(input).sum())


def mean_all(input) -> Tensor:
    x = as_compute(input)
    return _scalar(x.sum() / x.size)


def bce_with_logits_mean(logits: Tensor, target: Tensor) -> Tensor:
    """BCE media a partir de logits, forma estable max(z,0) - z*t + log(1 + e^-|z|)."""
    shapes.masked_dims(logits.dims, target.dims, op="bce_with_logits_mean")
    z, t = as_compute(logits), as_compute(target)
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return _scalar(per.sum() / per.size)


def masked_l1_mean(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """sum(|pred - target| * mask) / max(sum(mask), 1)."""
    shapes.masked_dims(pred.dims, target.dims, mask.dims, op="masked_l1_mean")
    m = as_compute(mask)
    diff = np.abs(as_compute(pred) - as_compute(target)) * m
    return _scalar(diff.sum() / max(m.sum(), 1.0))
