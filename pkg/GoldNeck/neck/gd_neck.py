"""
Ensamblado del neck Gather-and-Distribute.

    Low-GD:  (F_inj_P3, F_inj_P4) = Low-IFM(Low-FAM(B2..B5))
             P3, P4 = inyección (con LAF) en los niveles 3 y 4;  P5 = B5
    High-GD: (F_inj_N4, F_inj_N5) = High-IFM(High-FAM(P3, P4, P5))
             N4, N5 = inyección (con LAF) en los niveles 4 y 5;  N3 = P3

Los toggles cambian contenido y parámetros, nunca las formas de salida.
Prefijos de parámetros (y scopes): low_ifm, p3, p4, high_ifm, n4, n5.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.neck.config import NeckConfig
from GoldNeck.nn.gd_branches import HighIfmParams, LowIfmParams, high_fam, high_ifm, low_fam, low_ifm
from GoldNeck.nn.inject_laf import InjectParams, LafParams, inject_with_laf
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import check_mode
from GoldNeck.params import ParamView, as_view
from GoldNeck.tensor.core import Tensor

logger = logging.getLogger(__name__)

INPUT_LEVELS = ("B2", "B3", "B4", "B5")
LEVEL_STRIDES = {"B2": 4, "B3": 8, "B4": 16, "B5": 32}
MODULES = ("low_fam", "low_ifm", "p3", "p4", "high_fam", "high_ifm", "n4", "n5")


def _level_params(view: ParamView, cfg: NeckConfig, prefix: str, level: int, laf_mode: str,
                  channels: dict[int, int], inj_channels: int, use_inject: bool):
    """(LafParams | None, InjectParams | None) de un nivel del neck."""
    local_c = channels[level]
    laf = None
    if cfg.enable_laf:
        sides = {"lower": channels.get(level - 1), "upper": channels.get(level + 1)}
        laf = LafParams(
            view, f"{prefix}.laf", laf_mode, local_c,
            neighbor_channels={k: v for k, v in sides.items() if v is not None},
            merge=cfg.laf_merge, activation=cfg.laf_activation,
        )
    inj = InjectParams(view, f"{prefix}.inject", local_c, inj_channels, local_c, cfg.repblock_depth) \
        if use_inject else None
    return laf, inj


def low_ifm_params(view: ParamView, cfg: NeckConfig) -> LowIfmParams:
    return LowIfmParams(view, "low_ifm", cfg.low_align_channels, cfg.low_mid_channels,
                        cfg.low_split, cfg.repblock_depth)


def high_ifm_params(view: ParamView, cfg: NeckConfig) -> HighIfmParams:
    return HighIfmParams(view, "high_ifm", cfg.high_align_channels, cfg.embed_width, cfg.high_split,
                         cfg.transformer_depth, cfg.attn_dim, cfg.heads)


def gd_neck_forward(pyramid: FeaturePyramid, params, cfg: NeckConfig, mode: str = "train_form",
                    ops: Ops = EAGER) -> FeaturePyramid:
    """
    B2..B5 -> N3, N4, N5 con canales (C_B3, C_B4, C_B5) y los tamaños de B3..B5.

    Raises:
        ConfigurationError: pirámide inválida o parámetros faltantes para un toggle activo
    """
    check_mode(mode)
    view = as_view(params)
    pyramid.validate(count=4, what="gd_neck")
    b2, b3, b4, b5 = pyramid.values
    channels = cfg.level_channels
    for name, value in zip(INPUT_LEVELS, pyramid.values):
        c = ops.dims(value)[1]
        if c != channels[int(name[1])]:
            raise ConfigurationError(f"gd_neck: {name} tiene {c} canales; la config espera {channels[int(name[1])]}",
                                     key="model.channels")

    # --- Low-GD ---------------------------------------------------------------
    inj_p3 = inj_p4 = None
    if cfg.enable_low_gd:
        p = low_ifm_params(view, cfg)
        inj_p3, inj_p4 = low_ifm(low_fam(pyramid, ops=ops), p.repblock, p.split_sizes, p.projection, mode, ops=ops)

    low_levels = {}
    for level, prefix, f_inj, inj_c in ((3, "p3", inj_p3, cfg.low_split[0]), (4, "p4", inj_p4, cfg.low_split[1])):
        laf, inj = _level_params(view, cfg, prefix, level, "low", channels, inj_c, cfg.enable_low_gd)
        if laf is None and inj is None:
            low_levels[level] = pyramid.at_level(level)
            continue
        with ops.scope(prefix):
            low_levels[level] = inject_with_laf(level, pyramid, f_inj, laf, inj, mode, ops=ops)
    p3, p4, p5 = low_levels[3], low_levels[4], b5
    p_pyramid = FeaturePyramid([("P3", p3), ("P4", p4), ("P5", p5)])

    # --- High-GD --------------------------------------------------------------
    inj_n4 = inj_n5 = None
    if cfg.enable_high_gd:
        p = high_ifm_params(view, cfg)
        inj_n4, inj_n5 = high_ifm(high_fam(p_pyramid, ops=ops), p.blocks, p.reduce_conv, p.split_sizes,
                                  p.pre_projection, ops=ops)

    high_levels = {}
    for level, prefix, f_inj, inj_c in ((4, "n4", inj_n4, cfg.high_split[0]), (5, "n5", inj_n5, cfg.high_split[1])):
        laf, inj = _level_params(view, cfg, prefix, level, "high", channels, inj_c, cfg.enable_high_gd)
        if laf is None and inj is None:
            high_levels[level] = p_pyramid.at_level(level)
            continue
        with ops.scope(prefix):
            high_levels[level] = inject_with_laf(level, p_pyramid, f_inj, laf, inj, mode, ops=ops)

    return FeaturePyramid([("N3", p3), ("N4", high_levels[4]), ("N5", high_levels[5])])


def neck_graph(cfg: NeckConfig, mode: str = "train_form"):
    """Grafo graph(ops, pyramid, params) del neck GD."""

    def graph(ops, inputs, params):
        return gd_neck_forward(inputs, params, cfg, mode, ops=ops)

    return graph


# ============================================================================
# ENTRADAS
# ============================================================================

def pyramid_dims(cfg: NeckConfig, input_size: int, batch: int = 1) -> FeaturePyramid:
    """Dims de B2..B5 para una imagen input_size x input_size (strides 4/8/16/32)."""
    if input_size % 32:
        raise ConfigurationError(f"input_size debe ser múltiplo de 32 (recibido {input_size})", key="input_size")
    return FeaturePyramid(
        (name, (batch, c, input_size // LEVEL_STRIDES[name], input_size // LEVEL_STRIDES[name]))
        for name, c in zip(INPUT_LEVELS, cfg.channels)
    )


def random_pyramid(cfg: NeckConfig, input_size: int, seed: int = 0, batch: int = 1,
                   rng: Optional[np.random.Generator] = None) -> FeaturePyramid:
    rng = rng or np.random.default_rng(seed)
    return pyramid_dims(cfg, input_size, batch).map_values(
        lambda dims: Tensor(rng.standard_normal(dims).astype(np.float32), copy=False)
    )
