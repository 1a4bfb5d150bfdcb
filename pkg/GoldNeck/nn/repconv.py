"""
RepConv (3x3 + 1x1 + identidad-BN, ReLU tras la suma) y su pila RepBlock.

La forma de entrenamiento usa las tres ramas; la forma de despliegue usa una sola
conv 3x3 con bias obtenida plegando cada bn en su conv (estilo RepVGG):

    w' = w * gamma / sqrt(var + eps)
    b' = beta - gamma * mean / sqrt(var + eps)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError, NumericalError, StateError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.nn.layers import bn_stats, conv_spec
from GoldNeck.params import ParamStore, ParamView, StoreView
from GoldNeck.tensor.core import BatchNormStats, ConvSpec

logger = logging.getLogger(__name__)

MODES = ("train_form", "deploy_form")

DENSE, POINTWISE, IDENTITY, REPARAM = "rbr_dense", "rbr_1x1", "rbr_identity", "rbr_reparam"


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigurationError(f"Modo desconocido '{mode}'; opciones: {', '.join(MODES)}", key="mode")
    return mode


@dataclass(frozen=True)
class RepConvParams:
    """Parámetros de una RepConv leídos de `view` bajo `prefix`."""
    view: ParamView
    prefix: str
    in_channels: int
    out_channels: int

    @property
    def has_identity(self) -> bool:
        return self.in_channels == self.out_channels

    @property
    def has_branches(self) -> bool:
        return self.view.has(f"{self.prefix}.{DENSE}.conv.weight")

    @property
    def is_fused(self) -> bool:
        return self.view.has(f"{self.prefix}.{REPARAM}.weight")

    def branch_3x3(self) -> tuple[ConvSpec, BatchNormStats]:
        p = f"{self.prefix}.{DENSE}"
        return (conv_spec(self.view, f"{p}.conv", self.in_channels, self.out_channels, 3, padding=1),
                bn_stats(self.view, f"{p}.bn", self.out_channels))

    def branch_1x1(self) -> tuple[ConvSpec, BatchNormStats]:
        p = f"{self.prefix}.{POINTWISE}"
        return (conv_spec(self.view, f"{p}.conv", self.in_channels, self.out_channels, 1),
                bn_stats(self.view, f"{p}.bn", self.out_channels))

    def branch_identity(self) -> Optional[BatchNormStats]:
        if not self.has_identity:
            return None
        return bn_stats(self.view, f"{self.prefix}.{IDENTITY}", self.in_channels)

    def fused(self) -> Optional[ConvSpec]:
        if not self.is_fused:
            return None
        return conv_spec(self.view, f"{self.prefix}.{REPARAM}", self.in_channels, self.out_channels,
                         3, padding=1, bias=True)


def repconv_forward(x, p: RepConvParams, mode: str = "train_form", ops: Ops = EAGER):
    """
    train_form = relu(bn(conv3x3(x)) + bn(conv1x1(x)) [+ bn(x)])
    deploy_form = relu(fused_conv3x3(x))

    Con ramas y `rbr_reparam` presentes a la vez (lo que deja repconv_fuse), train_form
    usa siempre las ramas y deploy_form siempre la conv fusionada. Solo si las ramas
    ya se descartaron (store fusionado) train_form cae en la conv fusionada.

    Raises:
        StateError: deploy_form sin conv fusionada
    """
    check_mode(mode)
    c = ops.dims(x)[1]
    if c != p.in_channels:
        raise ConfigurationError(f"RepConv '{p.prefix}': input.c={c} pero in_channels={p.in_channels}")

    with ops.scope(p.prefix):
        if mode == "deploy_form" or (p.is_fused and not p.has_branches):
            spec = p.fused()
            if spec is None:
                raise StateError(f"RepConv '{p.prefix}': deploy_form pedido antes de fusionar")
            return ops.relu(ops.conv2d(x, spec))

        k3, bn3 = p.branch_3x3()
        k1, bn1 = p.branch_1x1()
        y = ops.add(ops.batchnorm(ops.conv2d(x, k3), bn3), ops.batchnorm(ops.conv2d(x, k1), bn1))
        identity = p.branch_identity()
        if identity is not None:
            y = ops.add(y, ops.batchnorm(x, identity))
        return ops.relu(y)


# ============================================================================
# FUSIÓN
# ============================================================================

def _fold_bn(kernel: np.ndarray, bn: BatchNormStats) -> tuple[np.ndarray, np.ndarray]:
    gamma, beta, mean, var = (np.asarray(v, dtype=np.float64) for v in (bn.gamma, bn.beta, bn.mean, bn.var))
    if not all(np.all(np.isfinite(v)) for v in (gamma, beta, mean, var)):
        raise NumericalError("Estadísticas de batchnorm no finitas; no se puede fusionar")
    if np.any(var + bn.eps <= 0):
        raise NumericalError("var + eps <= 0; no se puede fusionar")
    std = np.sqrt(var + bn.eps)
    t = gamma / std
    return kernel * t[:, None, None, None], beta - mean * t


def fused_kernel(p: RepConvParams) -> tuple[np.ndarray, np.ndarray]:
    """Kernel 3x3 y bias equivalentes a las tres ramas de `p` (float64)."""
    k3, bn3 = p.branch_3x3()
    k1, bn1 = p.branch_1x1()
    w3, b3 = _fold_bn(np.asarray(k3.weight, dtype=np.float64), bn3)
    w1, b1 = _fold_bn(np.pad(np.asarray(k1.weight, dtype=np.float64), ((0, 0), (0, 0), (1, 1), (1, 1))), bn1)
    weight, bias = w3 + w1, b3 + b1

    identity = p.branch_identity()
    if identity is not None:
        dirac = np.zeros((p.in_channels, p.in_channels, 3, 3), dtype=np.float64)
        dirac[np.arange(p.in_channels), np.arange(p.in_channels), 1, 1] = 1.0
        wi, bi = _fold_bn(dirac, identity)
        weight, bias = weight + wi, bias + bi
    return weight, bias


def _branch_names(p: RepConvParams) -> list[str]:
    names = []
    for branch in (DENSE, POINTWISE):
        names.append(f"{p.prefix}.{branch}.conv.weight")
        names += [f"{p.prefix}.{branch}.bn.{leaf}" for leaf in ("weight", "bias", "running_mean", "running_var")]
    if p.has_identity:
        names += [f"{p.prefix}.{IDENTITY}.{leaf}" for leaf in ("weight", "bias", "running_mean", "running_var")]
    return names


def repconv_fuse(p: RepConvParams) -> RepConvParams:
    """
    Devuelve la misma RepConv con `rbr_reparam` poblado (las ramas se conservan).

    Fusionar una RepConv ya fusionada la devuelve sin cambios.
    """
    if p.is_fused:
        return p
    weight, bias = fused_kernel(p)
    store = ParamStore({n: p.view.require(n, _shape_of(p, n)) for n in _branch_names(p)})
    store[f"{p.prefix}.{REPARAM}.weight"] = weight
    store[f"{p.prefix}.{REPARAM}.bias"] = bias
    return replace(p, view=StoreView(store))


def _shape_of(p: RepConvParams, name: str) -> tuple[int, ...]:
    leaf = name[len(p.prefix) + 1:]
    if leaf == f"{DENSE}.conv.weight":
        return (p.out_channels, p.in_channels, 3, 3)
    if leaf == f"{POINTWISE}.conv.weight":
        return (p.out_channels, p.in_channels, 1, 1)
    return (p.in_channels if leaf.startswith(IDENTITY) else p.out_channels,)


def fuse_store(store: ParamStore) -> ParamStore:
    """
    Convierte un ParamStore completo a forma de despliegue: cada RepConv se fusiona
    y sus tensores de rama se eliminan.
    """
    suffix = f".{DENSE}.conv.weight"
    fused = store.copy()
    prefixes = [n[: -len(suffix)] for n in store if n.endswith(suffix)]
    for prefix in prefixes:
        out_c, in_c = store[prefix + suffix].shape[:2]
        p = RepConvParams(StoreView(store), prefix, int(in_c), int(out_c))
        weight, bias = fused_kernel(p)
        for name in fused.names(prefix):
            leaf = name[len(prefix) + 1:]
            if leaf.split(".", 1)[0] in (DENSE, POINTWISE, IDENTITY):
                del fused[name]
        fused[f"{prefix}.{REPARAM}.weight"] = weight
        fused[f"{prefix}.{REPARAM}.bias"] = bias
    logger.info(f"✅ {len(prefixes)} RepConv fusionadas ({store.numel()} -> {fused.numel()} floats)")
    return fused


# ============================================================================
# REPBLOCK
# ============================================================================

@dataclass(frozen=True)
class RepBlockParams:
    """Pila de RepConv: la primera puede cambiar de canales, el resto los conserva."""
    units: tuple[RepConvParams, ...]

    def __post_init__(self):
        if not self.units:
            raise ConfigurationError("RepBlock requiere depth >= 1", key="repblock_depth")
        for prev, unit in zip(self.units, self.units[1:]):
            if unit.in_channels != prev.out_channels:
                raise ConfigurationError(
                    f"RepBlock: '{unit.prefix}' recibe {unit.in_channels} canales pero "
                    f"'{prev.prefix}' produce {prev.out_channels}"
                )

    @classmethod
    def build(cls, view: ParamView, prefix: str, in_channels: int, out_channels: int, depth: int) -> "RepBlockParams":
        if depth < 1:
            raise ConfigurationError(f"RepBlock '{prefix}': depth debe ser >= 1 (recibido {depth})",
                                     key="repblock_depth")
        return cls(tuple(
            RepConvParams(view, f"{prefix}.{i}", in_channels if i == 0 else out_channels, out_channels)
            for i in range(depth)
        ))

    @property
    def depth(self) -> int:
        return len(self.units)

    @property
    def in_channels(self) -> int:
        return self.units[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.units[-1].out_channels


def repblock_forward(x, p: RepBlockParams, mode: str = "train_form", ops: Ops = EAGER):
    """Composición secuencial de repconv_forward."""
    for unit in p.units:
        x = repconv_forward(x, unit, mode, ops=ops)
    return x


def repblock_fuse(p: RepBlockParams) -> RepBlockParams:
    return RepBlockParams(tuple(repconv_fuse(u) for u in p.units))


def repconv_param_names(p: RepConvParams) -> list[str]:
    """Nombres que ocupa `p` en el almacén (ramas y, si existe, la conv fusionada)."""
    names = _branch_names(p) if p.has_branches else []
    if p.is_fused:
        names += [f"{p.prefix}.{REPARAM}.weight", f"{p.prefix}.{REPARAM}.bias"]
    return names
