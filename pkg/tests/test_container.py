import os
import struct
import zlib

import numpy as np
import pytest

from lunarrm import container as lrdc
from lunarrm.container import (
    ContainerChecksumError, ContainerFormatError, ContainerTruncatedError, ContainerVersionError,
    Record, decode_container, encode_container, read_container, write_container,
)


def make_records(n, seed=0, shape=(8, 6)):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        out.append(Record(
            {"index": k, "frequency_hz": 415e6 if k % 2 else 5.8e9, "name": f"s{k}"},
            {"RM": rng.random(shape).astype(np.float32),
             "KM": (rng.random(shape) < 0.5).astype(np.uint8),
             "HM": rng.normal(size=shape).astype(np.float32)},
        ))
    return out


def parse_header_by_hand(buf):
    # independent walk over the documented layout
    assert buf[:4] == b"LRDC"
    version, count = struct.unpack_from("<HI", buf, 4)
    pos = 10
    records = []
    for _ in range(count):
        start = pos
        (meta_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4 + meta_len
        (n_ch,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        names = []
        for _ in range(n_ch):
            (nl,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            names.append(buf[pos:pos + nl].decode())
            pos += nl
            h, w, code = struct.unpack_from("<IIB", buf, pos)
            pos += 9
            pos += h * w * (4 if code == 0 else 1)
        (crc,) = struct.unpack_from("<I", buf, pos)
        assert crc == zlib.crc32(buf[start:pos])
        pos += 4
        records.append(names)
    assert pos == len(buf)
    return version, count, records


def test_round_trip_ten_samples(tmp_path):
    recs = make_records(10)
    path = tmp_path / "x.lrdc"
    write_container(path, recs)
    back = read_container(path)
    assert len(back) == 10
    for a, b in zip(recs, back):
        assert a.meta == b.meta
        assert list(a.channels) == list(b.channels)
        for name in a.channels:
            assert a.channels[name].dtype == b.channels[name].dtype
            assert a.channels[name].tobytes() == b.channels[name].tobytes()


def test_layout_matches_documentation():
    buf = encode_container(make_records(3))
    version, count, names = parse_header_by_hand(buf)
    assert (version, count) == (1, 3)
    assert names == [["RM", "KM", "HM"]] * 3


def test_empty_container(tmp_path):
    path = tmp_path / "e.lrdc"
    write_container(path, [])
    assert path.read_bytes() == b"LRDC" + struct.pack("<HI", 1, 0)
    assert read_container(path) == []


def test_flipped_payload_byte_names_record():
    recs = make_records(4)
    buf = bytearray(encode_container(recs))
    sizes = [len(lrdc.encode_record(r)) for r in recs]
    start2 = 10 + sizes[0] + sizes[1]
    target = start2 + sizes[2] - 10  # inside record 2's last payload
    buf[target] ^= 0x01
    with pytest.raises(ContainerChecksumError) as exc:
        decode_container(bytes(buf))
    assert exc.value.record_index == 2
    assert exc.value.offset == start2
    assert "record 2" in str(exc.value)


def test_version_mismatch():
    buf = bytearray(encode_container(make_records(1)))
    buf[4:6] = struct.pack("<H", 2)
    with pytest.raises(ContainerVersionError) as exc:
        decode_container(bytes(buf))
    assert exc.value.offset == 4


@pytest.mark.parametrize("cut", [3, 8, 20, -1, -5])
def test_truncation(cut):
    buf = encode_container(make_records(2))
    with pytest.raises(ContainerTruncatedError) as exc:
        decode_container(buf[:cut])
    assert exc.value.offset is not None


def test_bad_magic_and_trailing_bytes():
    buf = encode_container(make_records(1))
    with pytest.raises(ContainerFormatError):
        decode_container(b"XRDC" + buf[4:])
    with pytest.raises(ContainerFormatError):
        decode_container(buf + b"\x00")


def test_error_types_are_distinct():
    kinds = {ContainerChecksumError, ContainerFormatError, ContainerTruncatedError, ContainerVersionError}
    for a in kinds:
        for b in kinds - {a}:
            assert not issubclass(a, b)


def test_rejects_non_finite_on_write():
    with pytest.raises(ValueError):
        encode_container([Record({}, {"RM": np.array([[np.nan]])})])


def test_write_is_atomic_on_failure(tmp_path, monkeypatch):
    path = tmp_path / "out.lrdc"
    write_container(path, make_records(2))
    before = path.read_bytes()

    def boom(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(os, "fsync", boom)
    with pytest.raises(OSError):
        write_container(path, make_records(5, seed=3))
    assert path.read_bytes() == before
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.lrdc"]


def test_fixed_endianness():
    rec = Record({}, {"A": np.array([[1.0]], dtype=">f4")})
    buf = encode_container([rec])
    assert struct.pack("<f", 1.0) in buf
