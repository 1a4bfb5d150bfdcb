"""
Backbone y cabeza de juguete más el set sintético de cuadrados.

Sirven para ejercitar de punta a punta el camino GD: imagen -> B2..B5 -> neck ->
logits de clase y cajas por nivel -> pérdida BCE + L1 enmascarada.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.graph import EAGER, Ops
from GoldNeck.neck.config import NeckConfig
from GoldNeck.neck.gd_neck import INPUT_LEVELS, gd_neck_forward
from GoldNeck.nn.layers import ConvBnParams, conv_spec
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.params import as_view
from GoldNeck.tensor.core import Tensor

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
BOX_VALUES = 4
OUTPUT_STRIDES = {"N3": 8, "N4": 16, "N5": 32}


# ============================================================================
# BACKBONE
# ============================================================================

def stem_channels(cfg: NeckConfig) -> int:
    return max(cfg.channels[0] // 2, 4)


def toy_backbone(image, params, cfg: NeckConfig, ops: Ops = EAGER) -> FeaturePyramid:
    """
    Imagen n×3×H×W -> B2..B5 (strides 4/8/16/32) con los canales de la config.

    Stem y etapas son conv 2x2 stride 2 + bn + relu, así que una imagen constante
    produce features espacialmente constantes.

    Raises:
        ConfigurationError: H o W no divisibles por 32, o imagen sin 3 canales
    """
    view = as_view(params)
    n, c, h, w = ops.dims(image)
    if h % 32 or w % 32:
        raise ConfigurationError(f"toy_backbone: H y W deben ser múltiplos de 32 (recibido {h}x{w})",
                                 key="train.image_size")
    if c != IMAGE_CHANNELS:
        raise ConfigurationError(f"toy_backbone: se esperaban {IMAGE_CHANNELS} canales; recibidos {c}")

    stem_c = stem_channels(cfg)
    with ops.scope("backbone"):
        x = ConvBnParams(view, "backbone.stem", c, stem_c, kernel=2, stride=2).forward(image, ops=ops)
        levels = []
        prev = stem_c
        for i, (name, out_c) in enumerate(zip(INPUT_LEVELS, cfg.channels), start=1):
            x = ConvBnParams(view, f"backbone.stage{i}", prev, out_c, kernel=2, stride=2).forward(x, ops=ops)
            levels.append((name, x))
            prev = out_c
    return FeaturePyramid(levels)


# ============================================================================
# CABEZA
# ============================================================================

class DetectorOutput:
    """Por nivel de salida: logits de clase (n, num_classes, h, w) y cajas (n, 4, h, w)."""

    def __init__(self, levels):
        self.levels: tuple[tuple[str, object, object], ...] = tuple(levels)

    @property
    def names(self) -> list[str]:
        return [name for name, _, _ in self.levels]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, name):
        for n, cls, reg in self.levels:
            if n == name:
                return cls, reg
        raise ConfigurationError(f"DetectorOutput no tiene el nivel '{name}' (niveles: {self.names})")

    def map_values(self, fn: Callable) -> "DetectorOutput":
        return DetectorOutput((n, fn(cls), fn(reg)) for n, cls, reg in self.levels)

    def items_flat(self):
        out = []
        for n, cls, reg in self.levels:
            out.extend([(f"{n}.cls", cls), (f"{n}.reg", reg)])
        return out


def toy_detect_head(pyramid: FeaturePyramid, params, num_classes: int, ops: Ops = EAGER) -> DetectorOutput:
    """1x1 con bias por nivel: `head.<nivel>.cls` -> num_classes, `head.<nivel>.reg` -> 4."""
    if num_classes < 1:
        raise ConfigurationError(f"num_classes debe ser >= 1 (recibido {num_classes})", key="model.num_classes")
    view = as_view(params)
    levels = []
    for name, value in pyramid:
        c = ops.dims(value)[1]
        prefix = f"head.{name.lower()}"
        with ops.scope(prefix):
            cls = ops.conv2d(value, conv_spec(view, f"{prefix}.cls", c, num_classes, bias=True))
            reg = ops.conv2d(value, conv_spec(view, f"{prefix}.reg", c, BOX_VALUES, bias=True))
        levels.append((name, cls, reg))
    return DetectorOutput(levels)


# ============================================================================
# SET SINTÉTICO
# ============================================================================

@dataclass(frozen=True)
class SquareDataset:
    """
    Imágenes oscuras con un cuadrado brillante cada una; el brillo indica la clase.

    targets[nivel] = {"cls": (n, K, h, w), "box": (n, 4, h, w), "mask": (n, 4, h, w)}.
    Una celda es positiva sii el centro del cuadrado cae en ella; la caja es
    (dx, dy) dentro de la celda y (lado_x, lado_y) relativos a la imagen.
    """
    images: np.ndarray
    targets: dict
    labels: np.ndarray
    boxes: np.ndarray

    def __len__(self):
        return int(self.images.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.images.shape[2])

    def batch(self, indices=None) -> dict:
        """Entradas del grafo de pérdida (Tensors) para las muestras `indices` (todas si None)."""
        sel = slice(None) if indices is None else np.asarray(indices)
        return {
            "image": Tensor(self.images[sel]),
            "targets": {
                level: {k: Tensor(v[sel]) for k, v in parts.items()}
                for level, parts in self.targets.items()
            },
        }


def class_brightness(label: int, num_classes: int) -> float:
    return 0.5 + 0.5 * (label + 1) / num_classes


def make_square_dataset(count: int = 8, image_size: int = 32, num_classes: int = 2, seed: int = 0,
                        rng: Optional[np.random.Generator] = None) -> SquareDataset:
    """
    Raises:
        ConfigurationError: image_size no múltiplo de 32, count < 1 o num_classes < 1
    """
    if image_size % 32 or image_size < 32:
        raise ConfigurationError(f"image_size debe ser múltiplo de 32 (recibido {image_size})",
                                 key="train.image_size")
    if count < 1 or num_classes < 1:
        raise ConfigurationError(f"count y num_classes deben ser >= 1 (recibidos {count}, {num_classes})")
    rng = rng or np.random.default_rng(seed)

    images = (rng.random((count, IMAGE_CHANNELS, image_size, image_size)) * 0.1).astype(np.float32)
    labels = rng.integers(0, num_classes, size=count)
    boxes = np.zeros((count, 4), dtype=np.float64)
    targets = {
        level: {
            "cls": np.zeros((count, num_classes, image_size // s, image_size // s), dtype=np.float32),
            "box": np.zeros((count, BOX_VALUES, image_size // s, image_size // s), dtype=np.float32),
            "mask": np.zeros((count, BOX_VALUES, image_size // s, image_size // s), dtype=np.float32),
        }
        for level, s in OUTPUT_STRIDES.items()
    }

    min_side, max_side = max(image_size // 8, 2), image_size // 2
    for i in range(count):
        side = int(rng.integers(min_side, max_side + 1))
        x0 = int(rng.integers(0, image_size - side + 1))
        y0 = int(rng.integers(0, image_size - side + 1))
        images[i, :, y0:y0 + side, x0:x0 + side] = class_brightness(int(labels[i]), num_classes)
        cx, cy = x0 + side / 2.0, y0 + side / 2.0
        boxes[i] = (cx, cy, side, side)

        for level, stride in OUTPUT_STRIDES.items():
            cells = image_size // stride
            gx, gy = min(int(cx // stride), cells - 1), min(int(cy // stride), cells - 1)
            t = targets[level]
            t["cls"][i, labels[i], gy, gx] = 1.0
            t["box"][i, :, gy, gx] = (cx / stride - gx, cy / stride - gy, side / image_size, side / image_size)
            t["mask"][i, :, gy, gx] = 1.0

    logger.debug(f"🔍 Set sintético: {count} imágenes {image_size}x{image_size}, {num_classes} clases")
    return SquareDataset(images, targets, labels, boxes)


# ============================================================================
# DETECTOR COMPLETO Y PÉRDIDA
# ============================================================================

def toy_detector(image, params, cfg: NeckConfig, mode: str = "train_form", ops: Ops = EAGER) -> DetectorOutput:
    pyramid = toy_backbone(image, params, cfg, ops=ops)
    neck_out = gd_neck_forward(pyramid, params, cfg, mode, ops=ops)
    return toy_detect_head(neck_out, params, cfg.num_classes, ops=ops)


def detection_loss(output: DetectorOutput, targets: dict, ops: Ops = EAGER):
    """Σ niveles [BCE(logits, cls) + L1 enmascarada(cajas)]."""
    total = None
    for name, cls, reg in output.levels:
        t = targets[name]
        with ops.scope("loss"):
            term = ops.add(ops.bce_with_logits_mean(cls, t["cls"]), ops.masked_l1_mean(reg, t["box"], t["mask"]))
        total = term if total is None else ops.add(total, term)
    return total


def toy_loss_graph(cfg: NeckConfig, mode: str = "train_form"):
    """Grafo escalar graph(ops, {"image", "targets"}, params) del detector de juguete."""

    def graph(ops, inputs, params):
        output = toy_detector(inputs["image"], params, cfg, mode, ops=ops)
        return detection_loss(output, inputs["targets"], ops=ops)

    return graph


def toy_input_dims(cfg: NeckConfig, image_size: int, batch: int = 1) -> dict:
    """Dims de las entradas del grafo de pérdida (para init_params y los contadores)."""
    return {
        "image": (batch, IMAGE_CHANNELS, image_size, image_size),
        "targets": {
            level: {
                "cls": (batch, cfg.num_classes, image_size // s, image_size // s),
                "box": (batch, BOX_VALUES, image_size // s, image_size // s),
                "mask": (batch, BOX_VALUES, image_size // s, image_size // s),
            }
            for level, s in OUTPUT_STRIDES.items()
        },
    }
