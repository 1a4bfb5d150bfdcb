"""
Neck PAFPN de referencia: fusión recursiva entre niveles adyacentes.

    top-down:  lateral5(B5) -> up -> concat B4 -> td4 -> lateral4 -> up -> concat B3 -> td3 = N3
    bottom-up: down3(N3) concat lateral4 -> bu4 = N4;  down4(N4) concat lateral5 -> bu5 = N5

La información de B5 llega a N3 solo a través de td4.
"""
from __future__ import annotations

import logging

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.neck.config import NeckConfig
from GoldNeck.nn.layers import ConvBnParams
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import RepBlockParams, check_mode, repblock_forward
from GoldNeck.params import as_view

logger = logging.getLogger(__name__)

PAFPN_MODULES = ("lateral5", "td4", "lateral4", "td3", "down3", "bu4", "down4", "bu5")
MERGE_PREFIX = "td4"


def _merge(x, view, prefix, in_channels, out_channels, depth, mode, ops):
    block = RepBlockParams.build(view, prefix, in_channels, out_channels, depth)
    with ops.scope(prefix):
        return repblock_forward(x, block, mode, ops=ops)


def pafpn_forward(pyramid: FeaturePyramid, params, cfg: NeckConfig, mode: str = "train_form",
                  ops: Ops = EAGER) -> FeaturePyramid:
    """
    B2..B5 -> N3, N4, N5 (B2 no se usa). Con un único nivel devuelve la pirámide tal cual.

    Raises:
        ConfigurationError: pirámide inválida, canales distintos de la config o parámetros faltantes
    """
    check_mode(mode)
    if len(pyramid) == 1:
        return pyramid
    view = as_view(params)
    pyramid.validate(count=4, what="pafpn")
    _, c3, c4, c5 = cfg.channels
    _, b3, b4, b5 = pyramid.values
    for level, value in ((3, b3), (4, b4), (5, b5)):
        c = ops.dims(value)[1]
        if c != cfg.level_channels[level]:
            raise ConfigurationError(f"pafpn: B{level} tiene {c} canales; la config espera {cfg.level_channels[level]}",
                                     key="model.channels")
    depth = cfg.repblock_depth

    # --- top-down -------------------------------------------------------------
    lat5 = ConvBnParams(view, "lateral5", c5, c4).forward(b5, ops=ops)
    td4 = _merge(ops.concat_channels([ops.resize_to(lat5, ops.dims(b4)[2:]), b4]),
                 view, "td4", 2 * c4, c4, depth, mode, ops)
    lat4 = ConvBnParams(view, "lateral4", c4, c3).forward(td4, ops=ops)
    n3 = _merge(ops.concat_channels([ops.resize_to(lat4, ops.dims(b3)[2:]), b3]),
                view, "td3", 2 * c3, c3, depth, mode, ops)

    # --- bottom-up ------------------------------------------------------------
    down3 = ConvBnParams(view, "down3", c3, c3, kernel=2, stride=2).forward(n3, ops=ops)
    n4 = _merge(ops.concat_channels([down3, lat4]), view, "bu4", 2 * c3, c4, depth, mode, ops)
    down4 = ConvBnParams(view, "down4", c4, c4, kernel=2, stride=2).forward(n4, ops=ops)
    n5 = _merge(ops.concat_channels([down4, lat5]), view, "bu5", 2 * c4, c5, depth, mode, ops)

    return FeaturePyramid([("N3", n3), ("N4", n4), ("N5", n5)])


def pafpn_graph(cfg: NeckConfig, mode: str = "train_form"):
    """Grafo graph(ops, pyramid, params) del PAFPN."""

    def graph(ops, inputs, params):
        return pafpn_forward(inputs, params, cfg, mode, ops=ops)

    return graph
