"""
Sensibilidad entre niveles: cuánto cambia un nivel de salida del neck cuando se
perturba un nivel de entrada, opcionalmente con un módulo anulado (pesos en cero).

En el PAFPN, B5 llega a N3 solo a través de la fusión td4; en el neck GD también
llega por low_fam, así que anular la fusión del nivel 4 no corta el camino.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER
from GoldNeck.neck.config import NeckConfig
from GoldNeck.neck.gd_neck import neck_graph, pyramid_dims, random_pyramid
from GoldNeck.neck.pafpn import MERGE_PREFIX, pafpn_graph
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.params import ParamStore, init_params
from GoldNeck.tensor.core import Tensor, as_compute, verification_precision

logger = logging.getLogger(__name__)

NECKS = {"gd": neck_graph, "pafpn": pafpn_graph}
# Fusión del nivel intermedio (4) en cada neck
LEVEL4_MERGE = {"gd": "p4", "pafpn": MERGE_PREFIX}


def zero_module(store: ParamStore, prefix: str) -> ParamStore:
    """Copia de `store` con todos los tensores bajo `prefix` en cero."""
    out = store.copy()
    names = out.names(prefix)
    if not names:
        raise ConfigurationError(f"No hay parámetros bajo el prefijo '{prefix}'", key="prefix")
    for name in names:
        out[name] = np.zeros_like(out[name])
    return out


def cross_level_sensitivity(cfg: NeckConfig, neck: str = "gd", store: Optional[ParamStore] = None,
                            input_level: str = "B5", output_level: str = "N3",
                            zero_prefix: Optional[str] = None, input_size: int = 64,
                            seed: int = 0, delta: float = 1e-2) -> float:
    """
    max |Δ salida| / max |δ| para una perturbación fija δ del nivel `input_level`.

    Corre en float64. Con `zero_prefix` se anulan antes los parámetros de ese módulo.

    Raises:
        ConfigurationError: neck desconocido, nivel inexistente o prefijo sin parámetros
    """
    if neck not in NECKS:
        raise ConfigurationError(f"Neck desconocido '{neck}'; opciones: {', '.join(NECKS)}", key="neck")
    graph = NECKS[neck](cfg)
    rng = np.random.default_rng(seed)
    if store is None:
        store = init_params(graph, pyramid_dims(cfg, input_size), seed)
    if zero_prefix:
        store = zero_module(store, zero_prefix)

    with verification_precision():
        params = store.copy(dtype=np.float64)
        base = random_pyramid(cfg, input_size, rng=rng)
        if input_level not in base.names:
            raise ConfigurationError(f"La pirámide no tiene el nivel '{input_level}'", key="input_level")
        probe = delta * rng.standard_normal(base[input_level].dims)
        perturbed = FeaturePyramid(
            (name, Tensor(as_compute(v) + probe) if name == input_level else v) for name, v in base
        )
        before = graph(EAGER, base, params)[output_level]
        after = graph(EAGER, perturbed, params)[output_level]
        sensitivity = float(np.max(np.abs(as_compute(after) - as_compute(before))) / np.max(np.abs(probe)))

    logger.debug(f"🔍 Sensibilidad {neck} {input_level}->{output_level}"
                 f"{f' (sin {zero_prefix})' if zero_prefix else ''}: {sensitivity:.3e}")
    return sensitivity
