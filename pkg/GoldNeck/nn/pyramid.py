"""
Pirámide de features: niveles ordenados (nombre, valor) con stride 2 por eje entre niveles.
"""
from __future__ import annotations

import re
from typing import Any, Callable, Iterable, Optional

from GoldNeck.exceptions import ConfigurationError
from GoldNeck.tensor.core import dims_of

_LEVEL_RE = re.compile(r"(\d+)$")


def level_number(name: str) -> int:
    """'B3' -> 3, 'N5' -> 5."""
    match = _LEVEL_RE.search(name)
    if not match:
        raise ConfigurationError(f"Nombre de nivel sin índice: '{name}'")
    return int(match.group(1))


class FeaturePyramid:
    """
    Conjunto ordenado de niveles {B2..B5}, {P3..P5} o {N3..N5}.

    Los valores pueden ser Tensor, nodos trazados o formas: la pirámide solo
    los ordena y valida sus dims.
    """

    def __init__(self, levels: Iterable[tuple[str, Any]]):
        self.levels: tuple[tuple[str, Any], ...] = tuple((str(n), v) for n, v in levels)
        names = self.names
        if len(set(names)) != len(names):
            raise ConfigurationError(f"Niveles repetidos en la pirámide: {names}")

    @classmethod
    def from_dict(cls, mapping: dict) -> "FeaturePyramid":
        return cls(sorted(mapping.items(), key=lambda kv: level_number(kv[0])))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.levels]

    @property
    def values(self) -> list[Any]:
        return [v for _, v in self.levels]

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, key):
        if isinstance(key, int):
            return self.levels[key][1]
        for n, v in self.levels:
            if n == key:
                return v
        raise ConfigurationError(f"La pirámide no tiene el nivel '{key}' (niveles: {self.names})")

    def at_level(self, index: int) -> Optional[Any]:
        """Valor del nivel con número `index` (B3/P3/N3 -> 3), o None si no existe."""
        for n, v in self.levels:
            if level_number(n) == index:
                return v
        return None

    def map_values(self, fn: Callable) -> "FeaturePyramid":
        return FeaturePyramid((n, fn(v)) for n, v in self.levels)

    def items_flat(self):
        return list(self.levels)

    def dims(self) -> dict[str, tuple[int, ...]]:
        return {n: dims_of(v) for n, v in self.levels}

    def validate(self, count: Optional[int] = None, what: str = "pirámide") -> "FeaturePyramid":
        """
        Raises:
            ConfigurationError: número de niveles distinto, lotes distintos o niveles que no
                reducen a la mitad por eje
        """
        if count is not None and len(self) != count:
            raise ConfigurationError(f"{what}: se esperaban {count} niveles; recibidos {len(self)} ({self.names})")
        dims = list(self.dims().items())
        for (prev_name, prev), (name, cur) in zip(dims, dims[1:]):
            if cur[0] != prev[0]:
                raise ConfigurationError(f"{what}: batch distinto entre {prev_name} ({prev[0]}) y {name} ({cur[0]})")
            if cur[2] * 2 != prev[2] or cur[3] * 2 != prev[3]:
                raise ConfigurationError(
                    f"{what}: {name} mide {cur[2:]} pero debe ser la mitad por eje de {prev_name} {prev[2:]}"
                )
        return self

    def __repr__(self):
        return f"FeaturePyramid({', '.join(f'{n}={d}' for n, d in self.dims().items())})"
