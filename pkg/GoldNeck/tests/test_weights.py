import struct

import numpy as np
import pytest

from GoldNeck.cli.weights import MAGIC, load_weights, read_weights, save_weights, write_weights
from GoldNeck.exceptions import (
    BadMagicError,
    DuplicateNameError,
    TrailingBytesError,
    TruncatedPayloadError,
    UnknownDtypeError,
    WeightFormatError,
)
from GoldNeck.params import ParamStore


def entry(name: str, values: np.ndarray, tag: int = 0) -> bytes:
    encoded = name.encode("utf-8")
    return (struct.pack("<H", len(encoded)) + encoded + struct.pack("<BB", tag, values.ndim)
            + struct.pack(f"<{values.ndim}I", *values.shape) + values.astype("<f4").tobytes())


def document(*entries: bytes) -> bytes:
    return MAGIC + struct.pack("<I", len(entries)) + b"".join(entries)


def test_empty_store_is_header_only():
    payload = save_weights(ParamStore())
    assert payload == b"GDW1\x00\x00\x00\x00"
    assert len(load_weights(payload)) == 0


def test_single_tensor_layout():
    payload = save_weights(ParamStore({"w": np.arange(4).reshape(2, 2)}))
    # cabecera 8 + largo 2 + "w" 1 + dtype/rank 2 + dims 8 + payload 16
    assert len(payload) == 37
    assert payload == document(entry("w", np.arange(4, dtype=np.float32).reshape(2, 2)))


def test_round_trip_is_bitwise(micro_store):
    loaded = load_weights(save_weights(micro_store))
    assert loaded.equals(micro_store)


def test_saves_are_canonical(rng):
    a = ParamStore()
    a["b.weight"] = rng.standard_normal((3, 2))
    a["a.bias"] = rng.standard_normal(3)
    b = ParamStore({"a.bias": a["a.bias"], "b.weight": a["b.weight"]})
    assert save_weights(a) == save_weights(b)


def test_scalar_and_unicode_names_survive(rng):
    store = ParamStore({"escala.ñ": np.float32(2.5), "x": rng.standard_normal((1, 2, 3, 4))})
    loaded = load_weights(save_weights(store))
    assert loaded["escala.ñ"].shape == ()
    assert loaded.equals(store)


def test_bad_magic():
    with pytest.raises(BadMagicError):
        load_weights(b"GDW2\x00\x00\x00\x00")


def test_truncated_payload():
    payload = save_weights(ParamStore({"w": np.ones((2, 2))}))
    for cut in (2, 6, 12, len(payload) - 1):
        with pytest.raises(TruncatedPayloadError):
            load_weights(payload[:cut])


def test_duplicate_names():
    one = entry("w", np.ones(2, dtype=np.float32))
    with pytest.raises(DuplicateNameError, match="'w'"):
        load_weights(document(one, one))


def test_unknown_dtype_reports_tag():
    with pytest.raises(UnknownDtypeError) as exc:
        load_weights(document(entry("w", np.ones(2, dtype=np.float32), tag=3)))
    assert exc.value.dtype_tag == 3


def test_trailing_bytes_rejected():
    payload = save_weights(ParamStore({"w": np.ones(2)}))
    with pytest.raises(TrailingBytesError, match="sobrantes") as exc:
        load_weights(payload + b"\x00\x01\x02")
    assert exc.value.extra == 3
    assert not isinstance(exc.value, (BadMagicError, TruncatedPayloadError, DuplicateNameError, UnknownDtypeError))


def test_weight_errors_share_a_base_class():
    for cls in (BadMagicError, TruncatedPayloadError, DuplicateNameError, UnknownDtypeError, TrailingBytesError):
        assert issubclass(cls, WeightFormatError)


def test_write_and_read_file(tmp_path, micro_store):
    path = tmp_path / "sub" / "neck.gdw"
    size = write_weights(path, micro_store)
    assert path.stat().st_size == size
    assert read_weights(path).equals(micro_store)


def test_round_trip_over_random_stores():
    rng = np.random.default_rng(21)
    for draw in range(100):
        store = ParamStore()
        for i in range(int(rng.integers(0, 6))):
            rank = int(rng.integers(0, 5))
            store[f"m{draw}.t{i}"] = rng.standard_normal(tuple(int(d) for d in rng.integers(1, 4, size=rank)))
        payload = save_weights(store)
        assert load_weights(payload).equals(store)
        assert save_weights(load_weights(payload)) == payload
