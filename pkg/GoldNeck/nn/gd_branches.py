"""
Ramas de recolección del neck GD.

Etapa baja:  Low-FAM (B2..B5 -> tamaño de B4, concat) y Low-IFM (RepBlock + split).
Etapa alta:  High-FAM (P3..P5 -> tamaño de P5, concat) y High-IFM (L bloques
             transformer + conv 1x1 + split).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.nn.layers import ConvBnParams, conv_spec
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import RepBlockParams, repblock_forward
from GoldNeck.params import ParamView
from GoldNeck.tensor.core import ConvSpec


def _check_split(split_sizes, channels, where):
    split_sizes = tuple(int(s) for s in split_sizes)
    if sum(split_sizes) != channels or any(s < 1 for s in split_sizes):
        raise ConfigurationError(
            f"{where}: split {split_sizes} suma {sum(split_sizes)}; se esperaba {channels}",
            key="split",
        )
    return split_sizes


# ============================================================================
# ETAPA BAJA
# ============================================================================

def low_fam(pyramid: FeaturePyramid, ops: Ops = EAGER):
    """Alinea B2..B5 al tamaño de B4 (avgpool para B2/B3, bilinear para B5) y concatena."""
    pyramid.validate(count=4, what="low_fam")
    target = ops.dims(pyramid[2])[2:]
    with ops.scope("low_fam"):
        return ops.concat_channels([ops.resize_to(v, target) for v in pyramid.values])


@dataclass(frozen=True)
class LowIfmParams:
    """RepBlock C_in -> C_mid y proyección 1x1 C_mid -> s3+s4 (omitida si C_mid == s3+s4)."""
    view: ParamView
    prefix: str
    in_channels: int
    mid_channels: int
    split_sizes: tuple[int, int]
    depth: int = 3

    @property
    def repblock(self) -> RepBlockParams:
        return RepBlockParams.build(self.view, f"{self.prefix}.block", self.in_channels, self.mid_channels, self.depth)

    @property
    def projection(self) -> Optional[ConvBnParams]:
        out = sum(self.split_sizes)
        if out == self.mid_channels:
            return None
        return ConvBnParams(self.view, f"{self.prefix}.proj", self.mid_channels, out)


def low_ifm(f_align, repblock: RepBlockParams, split_sizes: Sequence[int], projection: Optional[ConvBnParams] = None,
            mode: str = "train_form", ops: Ops = EAGER):
    """
    F_fuse = RepBlock(F_align) [-> proyección]; (F_inj_P3, F_inj_P4) = Split(F_fuse).

    Raises:
        ConfigurationError: canales de entrada incompatibles o split que no suma
    """
    c = ops.dims(f_align)[1]
    if c != repblock.in_channels:
        raise ConfigurationError(f"low_ifm: F_align tiene {c} canales; el RepBlock espera {repblock.in_channels}")
    out_channels = projection.out_channels if projection is not None else repblock.out_channels
    split_sizes = _check_split(split_sizes, out_channels, "low_ifm")
    with ops.scope("low_ifm"):
        fused = repblock_forward(f_align, repblock, mode, ops=ops)
        if projection is not None:
            fused = projection.forward(fused, ops=ops)
        return tuple(ops.split_channels(fused, split_sizes))


# ============================================================================
# ETAPA ALTA
# ============================================================================

def high_fam(pyramid: FeaturePyramid, ops: Ops = EAGER):
    """Reduce P3..P5 al tamaño de P5 con avgpool y concatena."""
    pyramid.validate(count=3, what="high_fam")
    target = ops.dims(pyramid[-1])[2:]
    with ops.scope("high_fam"):
        return ops.concat_channels([ops.resize_to(v, target) for v in pyramid.values])


@dataclass(frozen=True)
class TransformerBlockParams:
    """
    Bloque transformer con bn en lugar de LayerNorm y ReLU en lugar de GELU.

    Q/K: D canales por cabeza; V: 2D por cabeza; FFN con expansión x2 y una
    conv depthwise 3x3 entre las dos 1x1.
    """
    view: ParamView
    prefix: str
    dim: int
    key_dim: int = 16
    heads: int = 4
    mlp_ratio: int = 2

    @property
    def value_dim(self) -> int:
        return 2 * self.key_dim

    @property
    def hidden(self) -> int:
        return self.mlp_ratio * self.dim

    def _cb(self, name, cin, cout, **kw):
        return ConvBnParams(self.view, f"{self.prefix}.{name}", cin, cout, act=kw.pop("act", None), **kw)

    @property
    def q(self):
        return self._cb("attn.q", self.dim, self.heads * self.key_dim)

    @property
    def k(self):
        return self._cb("attn.k", self.dim, self.heads * self.key_dim)

    @property
    def v(self):
        return self._cb("attn.v", self.dim, self.heads * self.value_dim)

    @property
    def proj(self):
        return self._cb("attn.proj", self.heads * self.value_dim, self.dim)

    @property
    def fc1(self):
        return self._cb("ffn.fc1", self.dim, self.hidden)

    @property
    def dwconv(self):
        return self._cb("ffn.dwconv", self.hidden, self.hidden, kernel=3, padding=1, groups=self.hidden)

    @property
    def fc2(self):
        return self._cb("ffn.fc2", self.hidden, self.dim)


def _check_width(x, p: TransformerBlockParams, ops):
    c = ops.dims(x)[1]
    if c != p.dim:
        raise ConfigurationError(f"transformer '{p.prefix}': ancho {c} distinto del embedding {p.dim}")


def attention_weights(tokens, p: TransformerBlockParams, ops: Ops = EAGER):
    """Mapa softmax(QᵀK / √D) por cabeza: (n, heads, hw, hw), filas que suman 1."""
    _check_width(tokens, p, ops)
    n, _, h, w = ops.dims(tokens)
    t = h * w
    q = ops.swap_last2(ops.reshape(p.q.forward(tokens, ops=ops), (n, p.heads, p.key_dim, t)))
    k = ops.reshape(p.k.forward(tokens, ops=ops), (n, p.heads, p.key_dim, t))
    scores = ops.scale(ops.matmul_batched(q, k), 1.0 / math.sqrt(p.key_dim))
    return ops.softmax_lastdim(scores)


def multi_head_attention(tokens, p: TransformerBlockParams, ops: Ops = EAGER):
    n, _, h, w = ops.dims(tokens)
    t = h * w
    attn = attention_weights(tokens, p, ops=ops)
    v = ops.swap_last2(ops.reshape(p.v.forward(tokens, ops=ops), (n, p.heads, p.value_dim, t)))
    out = ops.swap_last2(ops.matmul_batched(attn, v))
    out = ops.reshape(out, (n, p.heads * p.value_dim, h, w))
    return p.proj.forward(ops.relu(out), ops=ops)


def feed_forward(x, p: TransformerBlockParams, ops: Ops = EAGER):
    y = p.dwconv.forward(p.fc1.forward(x, ops=ops), ops=ops)
    return p.fc2.forward(ops.relu(y), ops=ops)


def transformer_block(tokens, p: TransformerBlockParams, ops: Ops = EAGER):
    """x <- x + MHA(x); x <- x + FFN(x)."""
    _check_width(tokens, p, ops)
    with ops.scope(p.prefix):
        x = ops.add(tokens, multi_head_attention(tokens, p, ops=ops))
        return ops.add(x, feed_forward(x, p, ops=ops))


@dataclass(frozen=True)
class HighIfmParams:
    """Proyección previa al ancho de embedding, L bloques, reducción 1x1 y split."""
    view: ParamView
    prefix: str
    in_channels: int
    embed_width: int
    split_sizes: tuple[int, int]
    depth: int = 2
    key_dim: int = 16
    heads: int = 4

    @property
    def pre_projection(self) -> Optional[ConvBnParams]:
        if self.embed_width == self.in_channels:
            return None
        return ConvBnParams(self.view, f"{self.prefix}.embed", self.in_channels, self.embed_width, act=None)

    @property
    def blocks(self) -> list[TransformerBlockParams]:
        return [
            TransformerBlockParams(self.view, f"{self.prefix}.blocks.{i}", self.embed_width, self.key_dim, self.heads)
            for i in range(self.depth)
        ]

    @property
    def reduce_conv(self) -> ConvSpec:
        return conv_spec(self.view, f"{self.prefix}.reduce", self.embed_width, sum(self.split_sizes), bias=True)


def high_ifm(f_align, blocks: Sequence[TransformerBlockParams], reduce_conv: ConvSpec, split_sizes: Sequence[int],
             pre_projection: Optional[ConvBnParams] = None, ops: Ops = EAGER):
    """
    (F_inj_N4, F_inj_N5) = Split(Conv1x1(Transformer^L(F_align))).

    Raises:
        ConfigurationError: L < 1 o split que no coincide con la salida de reduce_conv
    """
    if not blocks:
        raise ConfigurationError("high_ifm: se requiere al menos un bloque transformer", key="transformer_depth")
    split_sizes = _check_split(split_sizes, reduce_conv.out_channels, "high_ifm")
    with ops.scope("high_ifm"):
        x = pre_projection.forward(f_align, ops=ops) if pre_projection is not None else f_align
        for block in blocks:
            x = transformer_block(x, block, ops=ops)
        return tuple(ops.split_channels(ops.conv2d(x, reduce_conv), split_sizes))
