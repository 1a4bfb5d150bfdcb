"""
Configuración del neck GD (NeckConfig) y presets de escala N/S/M/L.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional

from GoldNeck.exceptions import ConfigurationError

# Canales base (B2..B5) a ancho 1.0; cada preset los escala
BASE_CHANNELS = (128, 256, 512, 1024)
BASE_LOW_MID = 512

SCALES = {
    # escala: (factor de ancho, profundidad L del transformer)
    "N": (0.25, 2),
    "S": (0.5, 2),
    "M": (0.75, 3),
    "L": (1.0, 3),
}

# Variantes de la tabla de ablación de estructura
ABLATION_TOGGLES = {
    "low": dict(enable_low_gd=True, enable_high_gd=False, enable_laf=False),
    "high": dict(enable_low_gd=False, enable_high_gd=True, enable_laf=False),
    "laf": dict(enable_low_gd=False, enable_high_gd=False, enable_laf=True),
    "low+high": dict(enable_low_gd=True, enable_high_gd=True, enable_laf=False),
    "low+high+laf": dict(enable_low_gd=True, enable_high_gd=True, enable_laf=True),
    # ablación de LAF concat vs suma (todo activo)
    "concat": dict(enable_low_gd=True, enable_high_gd=True, enable_laf=True, laf_merge="concat"),
    "add": dict(enable_low_gd=True, enable_high_gd=True, enable_laf=True, laf_merge="add"),
}
DEFAULT_ABLATION = ("low", "high", "laf", "low+high", "low+high+laf")
MERGE_ABLATION = ("concat", "add")


@dataclass(frozen=True)
class NeckConfig:
    """
    Anchos, splits de inyección, profundidades y toggles del neck.

    Los campos None se derivan de `channels` en __post_init__:
      low_split / high_split = (C_B4, C_B5); embed_width = 2*(C_B4 + C_B5).
    """
    scale: str = "S"
    channels: tuple[int, int, int, int] = (64, 128, 256, 512)
    low_mid_channels: int = 256
    low_split: Optional[tuple[int, int]] = None
    high_split: Optional[tuple[int, int]] = None
    repblock_depth: int = 3
    transformer_depth: int = 2
    attn_dim: int = 16
    heads: int = 4
    embed_width: Optional[int] = None
    enable_low_gd: bool = True
    enable_high_gd: bool = True
    enable_laf: bool = True
    laf_merge: str = "concat"
    laf_activation: bool = True
    num_classes: int = 2

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("channels", tuple(int(c) for c in self.channels))
        if len(self.channels) != 4:
            raise ConfigurationError(f"channels requiere 4 valores (C_B2..C_B5); recibido {self.channels}",
                                     key="model.channels")
        c4, c5 = self.channels[2], self.channels[3]
        set_("low_split", tuple(self.low_split) if self.low_split is not None else (c4, c5))
        set_("high_split", tuple(self.high_split) if self.high_split is not None else (c4, c5))
        if self.embed_width is None:
            set_("embed_width", 2 * (c4 + c5))
        self.validate()

    @classmethod
    def preset(cls, scale: str = "S", **overrides) -> "NeckConfig":
        """Preset de escala; `overrides` reemplaza cualquier campo."""
        scale = scale.upper()
        if scale not in SCALES:
            raise ConfigurationError(f"Escala desconocida '{scale}'; opciones: {', '.join(SCALES)}", key="model.scale")
        width, depth = SCALES[scale]
        base = dict(
            scale=scale,
            channels=tuple(int(c * width) for c in BASE_CHANNELS),
            low_mid_channels=int(BASE_LOW_MID * width),
            transformer_depth=depth,
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def validate(self) -> None:
        def positive(key, value):
            if int(value) < 1:
                raise ConfigurationError(f"{key} debe ser >= 1 (recibido {value})", key=f"model.{key}")

        for c in self.channels:
            positive("channels", c)
        for key in ("low_mid_channels", "repblock_depth", "transformer_depth", "attn_dim", "heads",
                    "embed_width", "num_classes"):
            positive(key, getattr(self, key))
        for key in ("low_split", "high_split"):
            split = getattr(self, key)
            if len(split) != 2:
                raise ConfigurationError(f"{key} requiere 2 valores; recibido {split}", key=f"model.{key}")
            for s in split:
                positive(key, s)
        if self.laf_merge not in ("concat", "add"):
            raise ConfigurationError(f"laf_merge debe ser 'concat' o 'add' (recibido '{self.laf_merge}')",
                                     key="model.laf_merge")

    # --- canales derivados ---------------------------------------------------

    @property
    def level_channels(self) -> dict[int, int]:
        return dict(zip((2, 3, 4, 5), self.channels))

    @property
    def output_channels(self) -> tuple[int, int, int]:
        return self.channels[1:]

    @property
    def low_align_channels(self) -> int:
        return sum(self.channels)

    @property
    def high_align_channels(self) -> int:
        return sum(self.channels[1:])

    # --- variantes -------------------------------------------------------------

    def with_toggles(self, name: str) -> "NeckConfig":
        if name not in ABLATION_TOGGLES:
            raise ConfigurationError(
                f"Toggle desconocido '{name}'; opciones: {', '.join(ABLATION_TOGGLES)}", key="toggles"
            )
        return replace(self, **ABLATION_TOGGLES[name])

    def without_gd(self) -> "NeckConfig":
        return replace(self, enable_low_gd=False, enable_high_gd=False, enable_laf=False)

    def to_dict(self) -> dict:
        return asdict(self)
