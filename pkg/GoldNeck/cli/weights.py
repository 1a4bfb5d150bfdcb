"""
Formato binario de pesos GDW1 (todo little-endian).

    "GDW1" | u32 cantidad de entradas
    por entrada: u16 largo del nombre | nombre UTF-8 | u8 dtype (0 = f32) | u8 rank
                 | rank x u32 dims | payload f32 row-major

Las entradas se escriben ordenadas por nombre, así que dos guardados del mismo
almacén producen los mismos bytes.
"""
from __future__ import annotations

import logging
import math
import struct
from pathlib import Path

import numpy as np

from GoldNeck.exceptions import (
    BadMagicError,
    DuplicateNameError,
    TrailingBytesError,
    TruncatedPayloadError,
    UnknownDtypeError,
    WeightFormatError,
)
from GoldNeck.params import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"GDW1"
DTYPE_F32 = 0
DTYPES = {DTYPE_F32: np.dtype("<f4")}
MAX_NAME_BYTES = 0xFFFF
MAX_RANK = 0xFF


def save_weights(store: ParamStore) -> bytes:
    """
    Serializa `store` en forma canónica (nombres en orden lexicográfico).

    Raises:
        WeightFormatError: nombre o rank que no caben en el formato
    """
    parts = [MAGIC, struct.pack("<I", len(store))]
    for name in sorted(store):
        value = np.ascontiguousarray(store[name], dtype=DTYPES[DTYPE_F32])
        encoded = name.encode("utf-8")
        if len(encoded) > MAX_NAME_BYTES:
            raise WeightFormatError(f"Nombre demasiado largo ({len(encoded)} bytes): '{name[:40]}...'")
        if value.ndim > MAX_RANK:
            raise WeightFormatError(f"'{name}' tiene rank {value.ndim}; el máximo es {MAX_RANK}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_F32, value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, size: int, what: str) -> memoryview:
        end = self.pos + size
        if end > len(self.data):
            raise TruncatedPayloadError(
                f"Archivo truncado leyendo {what}: se necesitan {size} bytes en el offset {self.pos}, "
                f"quedan {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(data: bytes) -> ParamStore:
    """
    Raises:
        BadMagicError: los primeros bytes no son "GDW1"
        TruncatedPayloadError: el archivo termina antes de lo declarado
        DuplicateNameError: dos entradas con el mismo nombre
        UnknownDtypeError: etiqueta de dtype distinta de 0
        TrailingBytesError: bytes sobrantes después de la última entrada
        WeightFormatError: nombre que no es UTF-8
    """
    data = bytes(data)
    if data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise TruncatedPayloadError(f"Archivo truncado: {len(data)} bytes, ni siquiera la cabecera")
        raise BadMagicError(f"Cabecera inválida {data[:4]!r}; se esperaba {MAGIC!r}")

    reader = _Reader(data)
    reader.take(4, "la cabecera")
    (count,) = reader.unpack("<I", "la cantidad de entradas")
    entries: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = reader.unpack("<H", f"el largo del nombre de la entrada {i}")
        raw = reader.take(name_len, f"el nombre de la entrada {i}")
        try:
            name = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"El nombre de la entrada {i} no es UTF-8 válido") from exc
        if name in entries:
            raise DuplicateNameError(f"Nombre duplicado en el archivo de pesos: '{name}'")
        tag, rank = reader.unpack("<BB", f"dtype y rank de '{name}'")
        if tag not in DTYPES:
            raise UnknownDtypeError(f"'{name}': etiqueta de dtype desconocida {tag}", dtype_tag=tag)
        dims = reader.unpack(f"<{rank}I", f"las dims de '{name}'")
        dtype = DTYPES[tag]
        payload = reader.take(math.prod(dims) * dtype.itemsize, f"el payload de '{name}'")
        entries[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).astype(np.float32)

    if reader.pos != len(data):
        extra = len(data) - reader.pos
        raise TrailingBytesError(f"{extra} bytes sobrantes después de {count} entradas", extra=extra)
    return ParamStore(entries)


def write_weights(path, store: ParamStore) -> int:
    payload = save_weights(store)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    logger.info(f"💾 Pesos guardados en {path} ({len(store)} tensores, {len(payload):,} bytes)")
    return len(payload)


def read_weights(path) -> ParamStore:
    store = load_weights(Path(path).read_bytes())
    logger.debug(f"🔍 Pesos leídos de {path}: {len(store)} tensores")
    return store
