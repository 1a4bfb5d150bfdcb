"""
Entrenamiento de juguete: SGD con momentum sobre backbone + neck GD + cabeza.

    v <- μ·v + g
    θ <- θ - lr·v

Los running stats de batchnorm quedan congelados (no son entrenables).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from GoldNeck.autodiff import backward, fd_gradcheck, forward_traced
from GoldNeck.exceptions import ConfigurationError, NumericalError
from GoldNeck.neck.config import NeckConfig
from GoldNeck.neck.toy import SquareDataset, toy_input_dims, toy_loss_graph
from GoldNeck.params import ParamStore, init_params
from GoldNeck.tensor.core import COMPUTE_DTYPE, as_compute

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    losses: list[float]
    store: ParamStore
    grad_norms: list[float] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def records(self) -> list[dict]:
        """Una fila por paso para el archivo de curva de pérdida."""
        return [
            {"step": i, "loss": loss, "grad_norm": norm}
            for i, (loss, norm) in enumerate(zip(self.losses, self.grad_norms))
        ]


def clip_factor(norm: float, clip: Optional[float]) -> float:
    if clip is None or clip <= 0 or norm <= clip:
        return 1.0
    return clip / norm


def toy_train(cfg: NeckConfig, dataset: SquareDataset, steps: int = 200, lr: float = 0.01,
              momentum: float = 0.9, seed: int = 0, clip: Optional[float] = 10.0,
              batch_size: Optional[int] = None, params: Optional[ParamStore] = None) -> TrainResult:
    """
    Entrena el detector de juguete y devuelve la pérdida de cada paso.

    Por defecto cada paso usa el set completo; con `batch_size` se sortean
    mini-lotes con un generador derivado de `seed`. Misma semilla, misma curva.

    Raises:
        ConfigurationError: steps < 1, lr < 0, momentum fuera de [0, 1) o batch_size inválido
        NumericalError: pérdida o gradiente no finitos (incluye el paso)
    """
    if steps < 1:
        raise ConfigurationError(f"steps debe ser >= 1 (recibido {steps})", key="train.steps")
    if lr < 0:
        raise ConfigurationError(f"lr debe ser >= 0 (recibido {lr})", key="train.lr")
    if not 0.0 <= momentum < 1.0:
        raise ConfigurationError(f"momentum debe estar en [0, 1) (recibido {momentum})", key="train.momentum")
    if batch_size is not None and not 1 <= batch_size <= len(dataset):
        raise ConfigurationError(f"batch_size debe estar en [1, {len(dataset)}] (recibido {batch_size})",
                                 key="train.batch_size")

    graph = toy_loss_graph(cfg)
    rows = batch_size or len(dataset)
    store = params.copy() if params is not None else init_params(
        graph, toy_input_dims(cfg, dataset.image_size, rows), seed
    )
    trainable = store.trainable()
    velocity = {n: np.zeros(store[n].shape, dtype=COMPUTE_DTYPE) for n in trainable}
    rng = np.random.default_rng(seed)
    full_batch = dataset.batch() if batch_size is None else None

    logger.info(f"🚀 Entrenamiento de juguete: {steps} pasos, lr={lr}, momentum={momentum}, "
                f"{len(dataset)} imágenes, {len(trainable)} tensores entrenables")
    start = time.perf_counter()
    losses, norms = [], []
    for step in range(steps):
        batch = full_batch if full_batch is not None else dataset.batch(
            np.sort(rng.choice(len(dataset), size=batch_size, replace=False))
        )
        value, tape = forward_traced(graph, batch, store)
        loss = float(as_compute(value).reshape(-1)[0])
        if not np.isfinite(loss):
            logger.error(f"❌ Pérdida no finita en el paso {step}")
            raise NumericalError(f"Pérdida no finita ({loss}) en el paso {step}", step=step)

        grads = backward(tape)
        norm = grads.global_norm(trainable)
        if not np.isfinite(norm):
            logger.error(f"❌ Gradiente no finito en el paso {step}")
            raise NumericalError(f"Gradiente no finito en el paso {step}", step=step)
        factor = clip_factor(norm, clip)

        for name in trainable:
            v = velocity[name]
            v *= momentum
            v += factor * grads[name].astype(COMPUTE_DTYPE)
            store[name] = store[name].astype(COMPUTE_DTYPE) - lr * v

        losses.append(loss)
        norms.append(norm)
        logger.debug(f"🔄 Paso {step}: pérdida {loss:.6f}, |g| {norm:.4f}")

    elapsed = time.perf_counter() - start
    logger.info(f"✅ Entrenamiento terminado en {elapsed:.1f}s: pérdida {losses[0]:.4f} -> {losses[-1]:.4f}")
    return TrainResult(losses, store, norms, elapsed)


def step_zero_gradcheck(cfg: NeckConfig, dataset: SquareDataset, seed: int = 0, probes: int = 32,
                        epsilon: float = 1e-3) -> float:
    """Gradcheck de la pérdida completa con los parámetros iniciales."""
    graph = toy_loss_graph(cfg)
    store = init_params(graph, toy_input_dims(cfg, dataset.image_size, len(dataset)), seed)
    return fd_gradcheck(graph, dataset.batch(), store, epsilon=epsilon, probes=probes, seed=seed)
