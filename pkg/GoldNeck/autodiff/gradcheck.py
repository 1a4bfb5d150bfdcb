"""
Verificación de gradientes por diferencias centrales.
"""
from __future__ import annotations

import logging

import numpy as np

from GoldNeck.autodiff.tape import backward, forward_traced
from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.graph import flatten_structure
from GoldNeck.params import ParamStore
from GoldNeck.tensor.core import as_compute, verification_precision

logger = logging.getLogger(__name__)

# Intentos extra cuando un probe cruza un quiebre de ReLU o de L1
RESAMPLE_FACTOR = 4


def scalar_loss(graph):
    """Envuelve `graph` para que devuelva un escalar: suma de todas sus salidas."""

    def wrapped(ops, inputs, params):
        out = graph(ops, inputs, params)
        leaves = [v for _, v in flatten_structure(out)]
        if len(leaves) == 1 and tuple(ops.dims(leaves[0])) == (1, 1, 1, 1):
            return leaves[0]
        total = ops.sum_all(leaves[0])
        for leaf in leaves[1:]:
            total = ops.add(total, ops.sum_all(leaf))
        return total

    return wrapped


def _loss_value(values, index) -> float:
    loss = float(as_compute(values[index]).reshape(-1)[0])
    if not np.isfinite(loss):
        raise NumericalError(f"Pérdida no finita durante la verificación de gradientes ({loss})")
    return loss


def _kink_signature(tape, values) -> bytes:
    """Patrón de signos de todas las entradas de ReLU y de los residuos de L1."""
    parts = []
    for node in tape.nodes:
        if node.op == "relu":
            parts.append(np.packbits(as_compute(values[node.inputs[0]]) > 0.0).tobytes())
        elif node.op == "masked_l1_mean":
            diff = as_compute(values[node.inputs[0]]) - as_compute(values[node.inputs[1]])
            parts.append(np.sign(diff).astype(np.int8).tobytes())
    return b"".join(parts)


def fd_gradcheck(graph, inputs, params: ParamStore, epsilon: float = 1e-3, probes: int = 64, seed: int = 0) -> float:
    """
    Compara el gradiente de backward con (L(θ+ε) - L(θ-ε)) / 2ε en `probes`
    coordenadas de parámetros elegidas al azar.

    Todo corre en float64. Los probes cuyas evaluaciones ±ε cambian algún patrón de
    signos (ReLU o L1) se descartan y se sortea otro, hasta 4x `probes` intentos.

    Returns:
        peor error relativo |a - n| / max(|a|, |n|, 1e-6)

    Raises:
        ConfigurationError: epsilon fuera de [1e-4, 1e-2] o probes < 1
        NumericalError: pérdida no finita
    """
    if not (1e-4 <= epsilon <= 1e-2):
        raise ConfigurationError(f"epsilon debe estar en [1e-4, 1e-2] (recibido {epsilon})", key="epsilon")
    if probes < 1:
        raise ConfigurationError(f"probes debe ser >= 1 (recibido {probes})", key="probes")

    loss_graph = scalar_loss(graph)
    with verification_precision():
        store = params.copy(dtype=np.float64)
        _, tape = forward_traced(loss_graph, inputs, store)
        out_idx = tape.output_index
        _loss_value(tape.values, out_idx)
        grads = backward(tape)
        base_signature = _kink_signature(tape, tape.values)

        used = sorted(tape.param_index())
        if not used:
            logger.warning("⚠️ El grafo no usa parámetros; no hay nada que verificar")
            return 0.0
        sizes = np.array([store[n].size for n in used])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        rng = np.random.default_rng(seed)

        worst, accepted, attempts = 0.0, 0, 0
        while accepted < probes and attempts < RESAMPLE_FACTOR * probes:
            attempts += 1
            flat = int(rng.integers(0, offsets[-1]))
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, idx = used[k], flat - int(offsets[k])

            arr = store[name].reshape(-1)
            original = arr[idx]
            arr[idx] = original + epsilon
            plus = tape.replay(store)
            arr[idx] = original - epsilon
            minus = tape.replay(store)
            arr[idx] = original

            if _kink_signature(tape, plus) != base_signature or _kink_signature(tape, minus) != base_signature:
                logger.debug(f"🔍 Probe {name}[{idx}] cruza un quiebre; se descarta")
                continue

            numeric = (_loss_value(plus, out_idx) - _loss_value(minus, out_idx)) / (2.0 * epsilon)
            analytic = float(grads[name].reshape(-1)[idx])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, err)
            accepted += 1

    if accepted == 0:
        raise NumericalError(f"Ningún probe válido tras {attempts} intentos (todos cruzan quiebres)")
    if accepted < probes:
        logger.warning(f"⚠️ Solo {accepted}/{probes} probes válidos tras {attempts} intentos")
    logger.info(f"✅ Gradcheck: {accepted} probes, error relativo máximo {worst:.3e}")
    return worst
