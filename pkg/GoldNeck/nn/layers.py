"""
Piezas básicas compartidas por los composites: convolución, batchnorm y conv+bn+act.

Nombres de parámetros:
  conv:     <prefix>.weight, <prefix>.bias (opcional)
  bn:       <prefix>.weight, <prefix>.bias, <prefix>.running_mean, <prefix>.running_var
  conv_bn:  <prefix>.conv.*, <prefix>.bn.*
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from GoldNeck.graph import EAGER, Ops
from GoldNeck.params import ParamView
from GoldNeck.settings import BN_EPS
from GoldNeck.tensor.core import BatchNormStats, ConvSpec


def conv_spec(view: ParamView, prefix: str, in_channels: int, out_channels: int, kernel: int = 1,
              stride: int = 1, padding: int = 0, groups: int = 1, bias: bool = False) -> ConvSpec:
    weight = view.require(f"{prefix}.weight", (out_channels, in_channels // groups, kernel, kernel), "conv")
    b = view.require(f"{prefix}.bias", (out_channels,), "zeros") if bias else None
    return ConvSpec(in_channels, out_channels, (kernel, kernel), weight, b, stride, padding, groups)


def bn_stats(view: ParamView, prefix: str, channels: int) -> BatchNormStats:
    return BatchNormStats(
        gamma=view.require(f"{prefix}.weight", (channels,), "ones"),
        beta=view.require(f"{prefix}.bias", (channels,), "zeros"),
        mean=view.require(f"{prefix}.running_mean", (channels,), "zeros"),
        var=view.require(f"{prefix}.running_var", (channels,), "ones"),
        eps=BN_EPS,
    )


def conv(x, view: ParamView, prefix: str, in_channels: int, out_channels: int, kernel: int = 1,
         stride: int = 1, padding: int = 0, groups: int = 1, bias: bool = True, ops: Ops = EAGER):
    """Convolución simple (sin bn)."""
    with ops.scope(prefix):
        spec = conv_spec(view, prefix, in_channels, out_channels, kernel, stride, padding, groups, bias)
        return ops.conv2d(x, spec)


def conv_bn(x, view: ParamView, prefix: str, in_channels: int, out_channels: int, kernel: int = 1,
            stride: int = 1, padding: int = 0, groups: int = 1, act: Optional[str] = "relu", ops: Ops = EAGER):
    """conv (sin bias) -> batchnorm -> activación opcional."""
    with ops.scope(prefix):
        spec = conv_spec(view, f"{prefix}.conv", in_channels, out_channels, kernel, stride, padding, groups)
        y = ops.batchnorm(ops.conv2d(x, spec), bn_stats(view, f"{prefix}.bn", out_channels))
        return ops.activation(y, act) if act else y


@dataclass(frozen=True)
class ConvBnParams:
    """Manejador de un bloque conv+bn(+act) bajo `prefix`."""
    view: ParamView
    prefix: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    groups: int = 1
    act: Optional[str] = "relu"

    def forward(self, x, ops: Ops = EAGER):
        return conv_bn(x, self.view, self.prefix, self.in_channels, self.out_channels, self.kernel,
                       self.stride, self.padding, self.groups, self.act, ops=ops)
