"""
Reglas de backward por operación.

Cada regla recibe (grad_salida, valores_entrada, valor_salida, attrs) y devuelve un
gradiente float64 por entrada (None si la entrada es constante por definición,
como la máscara de masked_l1_mean).
"""
from __future__ import annotations

import numpy as np

from GoldNeck.tensor.core import COMPUTE_DTYPE, as_compute, dims_of
from GoldNeck.tensor.kernels import avgpool_matrix, bilinear_matrix


def _conv2d(g, ins, out, attrs):
    x = as_compute(ins[0])
    w = as_compute(ins[1])
    s, p, groups = attrs["stride"], attrs["padding"], attrs["groups"]
    n, _, h, wd = x.shape
    o, cin_g, kh, kw = w.shape
    og = o // groups
    oh, ow = g.shape[2], g.shape[3]

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    xg = xp.reshape(n, groups, cin_g, xp.shape[2], xp.shape[3])
    wg = w.reshape(groups, og, cin_g, kh, kw)
    gg = g.reshape(n, groups, og, oh, ow)

    gxp = np.zeros_like(xg)
    gw = np.zeros_like(wg)
    for ky in range(kh):
        for kx in range(kw):
            ys = slice(ky, ky + s * (oh - 1) + 1, s)
            xs = slice(kx, kx + s * (ow - 1) + 1, s)
            patch = xg[:, :, :, ys, xs]
            gw[:, :, :, ky, kx] = np.einsum("ngohw,ngchw->goc", gg, patch, optimize=True)
            gxp[:, :, :, ys, xs] += np.einsum("ngohw,goc->ngchw", gg, wg[:, :, :, ky, kx], optimize=True)

    gxp = gxp.reshape(xp.shape)
    gx = gxp[:, :, p:p + h, p:p + wd] if p else gxp
    grads = [gx, gw.reshape(w.shape)]
    if len(ins) > 2:
        grads.append(g.sum(axis=(0, 2, 3)))
    return grads


def _batchnorm(g, ins, out, attrs):
    x = as_compute(ins[0])
    gamma, beta, mean, var = (as_compute(v) for v in ins[1:5])
    c = lambda v: v[None, :, None, None]
    denom = var + attrs["eps"]
    inv = 1.0 / np.sqrt(denom)
    centered = x - c(mean)
    gx = g * c(gamma * inv)
    ggamma = np.sum(g * centered, axis=(0, 2, 3)) * inv
    gbeta = g.sum(axis=(0, 2, 3))
    gmean = -gbeta * gamma * inv
    gvar = np.sum(g * centered, axis=(0, 2, 3)) * gamma * (-0.5) * denom ** -1.5
    return [gx, ggamma, gbeta, gmean, gvar]


def _relu(g, ins, out, attrs):
    # subgradiente 0 en x == 0
    return [g * (as_compute(ins[0]) > 0.0)]


def _sigmoid(g, ins, out, attrs):
    y = as_compute(out)
    return [g * y * (1.0 - y)]


def _separable_backward(matrix_fn):
    def rule(g, ins, out, attrs):
        _, _, h, w = dims_of(ins[0])
        th, tw = attrs["target"]
        mh, mw = matrix_fn(h, th), matrix_fn(w, tw)
        return [np.matmul(mh.T, np.matmul(g, mw))]
    return rule


def _concat(g, ins, out, attrs):
    grads, start = [], 0
    for v in ins:
        c = dims_of(v)[1]
        grads.append(g[:, start:start + c])
        start += c
    return grads


def _slice(g, ins, out, attrs):
    gx = np.zeros(dims_of(ins[0]), dtype=COMPUTE_DTYPE)
    gx[:, attrs["start"]:attrs["stop"]] = g
    return [gx]


def _matmul(g, ins, out, attrs):
    a, b = as_compute(ins[0]), as_compute(ins[1])
    return [np.matmul(g, b.swapaxes(-1, -2)), np.matmul(a.swapaxes(-1, -2), g)]


def _softmax(g, ins, out, attrs):
    y = as_compute(out)
    return [y * (g - np.sum(g * y, axis=-1, keepdims=True))]


def _add(g, ins, out, attrs):
    return [g, g]


def _mul(g, ins, out, attrs):
    return [g * as_compute(ins[1]), g * as_compute(ins[0])]


def _scale(g, ins, out, attrs):
    return [g * attrs["factor"]]


def _reshape(g, ins, out, attrs):
    return [g.reshape(dims_of(ins[0]))]


def _swap_last2(g, ins, out, attrs):
    return [g.transpose(0, 1, 3, 2)]


def _sum(g, ins, out, attrs):
    return [np.full(dims_of(ins[0]), float(g.reshape(-1)[0]), dtype=COMPUTE_DTYPE)]


def _mean(g, ins, out, attrs):
    dims = dims_of(ins[0])
    return [np.full(dims, float(g.reshape(-1)[0]) / np.prod(dims), dtype=COMPUTE_DTYPE)]


def _bce_with_logits_mean(g, ins, out, attrs):
    z, t = as_compute(ins[0]), as_compute(ins[1])
    k = float(g.reshape(-1)[0]) / z.size
    prob = 1.0 / (1.0 + np.exp(-z))
    return [(prob - t) * k, -z * k]


def _masked_l1_mean(g, ins, out, attrs):
    pred, target, mask = (as_compute(v) for v in ins)
    k = float(g.reshape(-1)[0]) / max(mask.sum(), 1.0)
    gp = np.sign(pred - target) * mask * k
    return [gp, -gp, None]


RULES = {
    "conv2d": _conv2d,
    "batchnorm": _batchnorm,
    "relu": _relu,
    "sigmoid": _sigmoid,
    "avgpool": _separable_backward(avgpool_matrix),
    "bilinear": _separable_backward(bilinear_matrix),
    "concat": _concat,
    "slice": _slice,
    "matmul": _matmul,
    "softmax": _softmax,
    "add": _add,
    "mul": _mul,
    "scale": _scale,
    "reshape": _reshape,
    "swap_last2": _swap_last2,
    "sum": _sum,
    "mean": _mean,
    "bce_with_logits_mean": _bce_with_logits_mean,
    "masked_l1_mean": _masked_l1_mean,
}
