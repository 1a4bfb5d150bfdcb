"""
Módulo de inyección de información y fusión ligera de capas adyacentes (LAF).

Inyección (igual en la etapa baja y la alta):
    act   = resize(sigmoid(conv_act(f_inj)))
    embed = resize(conv_global_embed(f_inj))
    fused = conv_local_embed(f_local) * act + embed
    out   = RepBlock(fused)

LAF: los vecinos se llevan al tamaño del nivel local (avgpool si son más grandes,
bilinear si son más chicos), se adaptan con 1x1 si sus canales difieren, se unen
(concat por defecto, o suma) y se reducen con conv+bn(+relu) a los canales locales.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.nn.layers import ConvBnParams, conv_spec
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import RepBlockParams, repblock_forward
from GoldNeck.params import ParamView
from GoldNeck.tensor.core import ConvSpec

LAF_MODES = {"low": ("lower", "upper"), "high": ("lower",)}
LAF_MERGES = ("concat", "add")
SIDE_OFFSET = {"lower": -1, "upper": +1}


# ============================================================================
# INYECCIÓN
# ============================================================================

@dataclass(frozen=True)
class InjectParams:
    view: ParamView
    prefix: str
    local_channels: int
    inj_channels: int
    out_channels: int
    depth: int = 1

    @property
    def conv_local_embed(self) -> ConvSpec:
        return conv_spec(self.view, f"{self.prefix}.local_embedding", self.local_channels, self.out_channels, bias=True)

    @property
    def conv_global_embed(self) -> ConvSpec:
        return conv_spec(self.view, f"{self.prefix}.global_embedding", self.inj_channels, self.out_channels, bias=True)

    @property
    def conv_act(self) -> ConvSpec:
        return conv_spec(self.view, f"{self.prefix}.global_act", self.inj_channels, self.out_channels, bias=True)

    @property
    def tail(self) -> RepBlockParams:
        return RepBlockParams.build(self.view, f"{self.prefix}.tail", self.out_channels, self.out_channels, self.depth)


def attention_gate(f_inj, p: InjectParams, target, ops: Ops = EAGER):
    """sigmoid(conv_act(f_inj)) llevado a `target`; siempre en (0, 1)."""
    return ops.resize_to(ops.sigmoid(ops.conv2d(f_inj, p.conv_act)), target)


def inject(f_local, f_inj, p: InjectParams, target, mode: str = "train_form", ops: Ops = EAGER):
    """
    Inyecta la información global `f_inj` en `f_local`.

    Raises:
        ConfigurationError: target distinto del tamaño de f_local o canales incompatibles
    """
    n, c, h, w = ops.dims(f_local)
    target = tuple(int(t) for t in target)
    if target != (h, w):
        raise ConfigurationError(f"inject '{p.prefix}': target {target} distinto del tamaño local {(h, w)}")
    if c != p.local_channels:
        raise ConfigurationError(f"inject '{p.prefix}': f_local.c={c} pero local_channels={p.local_channels}")
    c_inj = ops.dims(f_inj)[1]
    if c_inj != p.inj_channels:
        raise ConfigurationError(f"inject '{p.prefix}': f_inj.c={c_inj} pero inj_channels={p.inj_channels}")

    with ops.scope(p.prefix):
        act = attention_gate(f_inj, p, target, ops=ops)
        embed = ops.resize_to(ops.conv2d(f_inj, p.conv_global_embed), target)
        local = ops.conv2d(f_local, p.conv_local_embed)
        fused = ops.add(ops.mul(local, act), embed)
        return repblock_forward(fused, p.tail, mode, ops=ops)


# ============================================================================
# LAF
# ============================================================================

@dataclass(frozen=True)
class LafParams:
    """
    neighbor_channels: canales de cada vecino, {"lower": c, "upper": c}.
    neighbors: lados usados; por defecto los del modo (low: ambos, high: solo el inferior).
    """
    view: ParamView
    prefix: str
    mode: str
    local_channels: int
    neighbor_channels: dict = field(default_factory=dict)
    merge: str = "concat"
    activation: bool = True
    neighbors: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.mode not in LAF_MODES:
            raise ConfigurationError(f"LAF '{self.prefix}': modo desconocido '{self.mode}'", key="laf_mode")
        if self.merge not in LAF_MERGES:
            raise ConfigurationError(f"LAF '{self.prefix}': merge desconocido '{self.merge}'", key="laf_merge")
        if self.neighbors is None:
            object.__setattr__(self, "neighbors", LAF_MODES[self.mode])
        for side in self.neighbors:
            if side not in SIDE_OFFSET:
                raise ConfigurationError(f"LAF '{self.prefix}': lado desconocido '{side}'")
            if side not in self.neighbor_channels:
                raise ConfigurationError(f"LAF '{self.prefix}': faltan los canales del vecino '{side}'")

    def adapter(self, side: str) -> Optional[ConvSpec]:
        """1x1 con bias que lleva el vecino a los canales locales; None si ya coinciden."""
        c = self.neighbor_channels[side]
        if c == self.local_channels:
            return None
        return conv_spec(self.view, f"{self.prefix}.adapt_{side}", c, self.local_channels, bias=True)

    @property
    def merged_channels(self) -> int:
        if self.merge == "add":
            return self.local_channels
        return self.local_channels * (len(self.neighbors) + 1)

    @property
    def reducer(self) -> ConvBnParams:
        return ConvBnParams(self.view, f"{self.prefix}.reduce", self.merged_channels, self.local_channels,
                            act="relu" if self.activation else None)


def laf_fuse(local_level_index: int, pyramid: FeaturePyramid, p: LafParams, ops: Ops = EAGER):
    """
    Fusiona el nivel `local_level_index` con sus vecinos inmediatos.

    Raises:
        ConfigurationError: falta el nivel local o un vecino requerido
    """
    local = pyramid.at_level(local_level_index)
    if local is None:
        raise ConfigurationError(f"LAF '{p.prefix}': la pirámide no tiene el nivel {local_level_index}")
    _, c, h, w = ops.dims(local)
    if c != p.local_channels:
        raise ConfigurationError(f"LAF '{p.prefix}': el nivel local tiene {c} canales; se esperaban {p.local_channels}")

    with ops.scope(p.prefix):
        adapted = {}
        for side in p.neighbors:
            level = local_level_index + SIDE_OFFSET[side]
            value = pyramid.at_level(level)
            if value is None:
                raise ConfigurationError(
                    f"LAF '{p.prefix}': falta el vecino {side} (nivel {level}) del nivel {local_level_index}"
                )
            value = ops.resize_to(value, (h, w))
            spec = p.adapter(side)
            adapted[side] = ops.conv2d(value, spec) if spec is not None else value

        ordered = [adapted[s] for s in ("lower",) if s in adapted] + [local] + \
                  [adapted[s] for s in ("upper",) if s in adapted]
        if p.merge == "concat":
            merged = ops.concat_channels(ordered)
        else:
            merged = ordered[0]
            for t in ordered[1:]:
                merged = ops.add(merged, t)
        return p.reducer.forward(merged, ops=ops)


def inject_with_laf(local_level_index: int, pyramid: FeaturePyramid, f_inj, laf: Optional[LafParams],
                    inj: Optional[InjectParams], mode: str = "train_form", ops: Ops = EAGER):
    """
    inject(laf_fuse(...), f_inj) con LAF activo; inject(f_local, f_inj) sin LAF.
    Sin inyección (rama GD apagada) devuelve la salida de LAF sola.
    """
    if laf is not None:
        local = laf_fuse(local_level_index, pyramid, laf, ops=ops)
    else:
        local = pyramid.at_level(local_level_index)
        if local is None:
            raise ConfigurationError(f"La pirámide no tiene el nivel {local_level_index}")
    if inj is None:
        return local
    return inject(local, f_inj, inj, ops.dims(local)[2:], mode, ops=ops)
