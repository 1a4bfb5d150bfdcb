"""
Documento de configuración JSON de la CLI.

Secciones: model, bench, train, io. Toda clave tiene un valor por defecto
(ver GoldNeck/docs/CONFIGURACION.md); las claves desconocidas y los valores mal
tipados se rechazan con un ConfigurationError que nombra la clave y la línea.
"""
from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.neck.config import NeckConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Field:
    default: Any
    kind: str  # int | float | bool | str | ints
    nullable: bool = False
    minimum: Optional[float] = None
    length: Optional[int] = None
    choices: Optional[tuple] = None


SCHEMA: dict[str, dict[str, Field]] = {
    "model": {
        "scale": Field("S", "str", choices=("N", "S", "M", "L")),
        "neck": Field("gd", "str", choices=("gd", "pafpn")),
        "backbone": Field(False, "bool"),
        "channels": Field(None, "ints", nullable=True, minimum=1, length=4),
        "low_mid_channels": Field(None, "int", nullable=True, minimum=1),
        "low_split": Field(None, "ints", nullable=True, minimum=1, length=2),
        "high_split": Field(None, "ints", nullable=True, minimum=1, length=2),
        "repblock_depth": Field(3, "int", minimum=1),
        "transformer_depth": Field(None, "int", nullable=True, minimum=1),
        "attn_dim": Field(16, "int", minimum=1),
        "heads": Field(4, "int", minimum=1),
        "embed_width": Field(None, "int", nullable=True, minimum=1),
        "enable_low_gd": Field(True, "bool"),
        "enable_high_gd": Field(True, "bool"),
        "enable_laf": Field(True, "bool"),
        "laf_merge": Field("concat", "str", choices=("concat", "add")),
        "laf_activation": Field(True, "bool"),
        "num_classes": Field(2, "int", minimum=1),
    },
    "bench": {
        "iterations": Field(30, "int", minimum=30),
        "warmup": Field(5, "int", minimum=5),
        "threads": Field(None, "int", nullable=True, minimum=1),
        "input_size": Field(256, "int", minimum=32),
        "mode": Field("train_form", "str", choices=("train_form", "deploy_form")),
    },
    "train": {
        "steps": Field(200, "int", minimum=1),
        "lr": Field(0.01, "float", minimum=0.0),
        "momentum": Field(0.9, "float", minimum=0.0),
        "seed": Field(0, "int", minimum=0),
        "image_size": Field(32, "int", minimum=32),
        "dataset_size": Field(8, "int", minimum=1),
        "batch_size": Field(None, "int", nullable=True, minimum=1),
        "clip": Field(10.0, "float", nullable=True, minimum=0.0),
    },
    "io": {
        "weights": Field(None, "str", nullable=True),
        "input": Field(None, "str", nullable=True),
        "output": Field(None, "str", nullable=True),
    },
}

# Campos de `model` que pasan directo a NeckConfig
_NECK_FIELDS = ("channels", "low_mid_channels", "low_split", "high_split", "repblock_depth", "transformer_depth",
                "attn_dim", "heads", "embed_width", "enable_low_gd", "enable_high_gd", "enable_laf", "laf_merge",
                "laf_activation", "num_classes")


def defaults() -> dict[str, dict[str, Any]]:
    return {section: {k: copy.deepcopy(f.default) for k, f in fields.items()} for section, fields in SCHEMA.items()}


# ============================================================================
# VALIDACIÓN
# ============================================================================

def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    """Línea (1-based) donde aparece la clave; None si no se encuentra."""
    match = re.search(rf'"{re.escape(section)}"\s*:', text)
    if match is None:
        return None
    pos = match.start()
    if key is not None:
        sub = re.compile(rf'"{re.escape(key)}"\s*:').search(text, match.end())
        if sub is None:
            return None
        pos = sub.start()
    return text.count("\n", 0, pos) + 1


def _type_ok(value, kind: str) -> bool:
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "ints":
        return isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    return False


def _check_value(dotted: str, value, spec: Field, line) -> Any:
    def fail(msg):
        raise ConfigurationError(f"{dotted}: {msg}" + (f" (línea {line})" if line else ""), key=dotted, line=line)

    if value is None:
        if not spec.nullable:
            fail("no admite null")
        return None
    if not _type_ok(value, spec.kind):
        expected = {"ints": "lista de enteros"}.get(spec.kind, spec.kind)
        fail(f"se esperaba {expected}; recibido {json.dumps(value)}")
    if spec.kind == "float":
        value = float(value)
    if spec.choices is not None and value not in spec.choices:
        fail(f"valor '{value}' inválido; opciones: {', '.join(spec.choices)}")
    if spec.length is not None and len(value) != spec.length:
        fail(f"se esperaban {spec.length} valores; recibidos {len(value)}")
    if spec.minimum is not None:
        values = value if isinstance(value, list) else [value]
        if any(v < spec.minimum for v in values):
            fail(f"debe ser >= {spec.minimum:g}; recibido {json.dumps(value)}")
    return value


# ============================================================================
# DOCUMENTO
# ============================================================================

@dataclass
class ConfigDocument:
    model: dict = field(default_factory=lambda: defaults()["model"])
    bench: dict = field(default_factory=lambda: defaults()["bench"])
    train: dict = field(default_factory=lambda: defaults()["train"])
    io: dict = field(default_factory=lambda: defaults()["io"])

    @classmethod
    def parse(cls, text: str) -> "ConfigDocument":
        """
        Raises:
            ConfigurationError: JSON inválido, sección/clave desconocida o valor mal tipado
        """
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"JSON inválido: {exc.msg} (línea {exc.lineno})", line=exc.lineno) from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("El documento de configuración debe ser un objeto JSON", line=1)

        values = defaults()
        for section, body in raw.items():
            line = _line_of(text, section)
            if section not in SCHEMA:
                raise ConfigurationError(
                    f"Sección desconocida '{section}' (línea {line}); opciones: {', '.join(SCHEMA)}",
                    key=section, line=line,
                )
            if not isinstance(body, dict):
                raise ConfigurationError(f"{section}: se esperaba un objeto (línea {line})", key=section, line=line)
            for key, value in body.items():
                dotted = f"{section}.{key}"
                key_line = _line_of(text, section, key)
                if key not in SCHEMA[section]:
                    raise ConfigurationError(
                        f"Clave desconocida '{dotted}' (línea {key_line})", key=dotted, line=key_line,
                    )
                values[section][key] = _check_value(dotted, value, SCHEMA[section][key], key_line)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ConfigDocument":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"No existe el archivo de configuración {path}", key="--config")
        doc = cls.parse(path.read_text(encoding="utf-8"))
        logger.debug(f"🔍 Configuración leída de {path}")
        return doc

    def to_dict(self) -> dict:
        return {"model": dict(self.model), "bench": dict(self.bench), "train": dict(self.train), "io": dict(self.io)}

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_neck_config(self) -> NeckConfig:
        overrides = {k: (tuple(v) if isinstance(v, list) else v) for k, v in self.model.items() if k in _NECK_FIELDS}
        return NeckConfig.preset(self.model["scale"], **overrides)
