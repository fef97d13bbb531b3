"""LRDC v1: a small self-describing binary container for gridded samples.

Layout (all integers little-endian)::

    b"LRDC" | u16 version | u32 sample_count
    per sample:
        u32 meta_len | meta (UTF-8 JSON)
        u16 channel_count
        per channel:
            u16 name_len | name (UTF-8) | u32 H | u32 W | u8 dtype | payload (row-major)
        u32 CRC32 of every byte of the sample record above

dtype codes: 0 = float32, 1 = uint8.
"""

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LRDC"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("u1"): 1}


class ContainerError(ValueError):
    """Malformed container; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ContainerFormatError(ContainerError):
    pass


class ContainerVersionError(ContainerError):
    pass


class ContainerTruncatedError(ContainerError):
    pass


class ContainerChecksumError(ContainerError):
    def __init__(self, message, offset=None, record_index=None):
        self.record_index = record_index
        super().__init__(message, offset)


@dataclass
class Record:
    meta: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)


def _as_storable(name, arr):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"channel {name!r} must be 2-D")
    if arr.dtype == np.bool_ or arr.dtype == np.uint8:
        return np.ascontiguousarray(arr, dtype="u1")
    if np.issubdtype(arr.dtype, np.number):
        out = np.ascontiguousarray(arr, dtype="<f4")
        if not np.all(np.isfinite(out)):
            raise ValueError(f"channel {name!r} contains non-finite values")
        return out
    raise ValueError(f"channel {name!r} has unsupported dtype {arr.dtype}")


def encode_record(record):
    meta = getattr(record, "to_record", None)
    if meta is not None:
        record = record.to_record()
    meta_bytes = json.dumps(record.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [struct.pack("<I", len(meta_bytes)), meta_bytes,
             struct.pack("<H", len(record.channels))]
    for name, arr in record.channels.items():
        data = _as_storable(name, arr)
        name_bytes = name.encode("utf-8")
        h, w = data.shape
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<IIB", h, w, DTYPE_CODES[data.dtype]))
        parts.append(data.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def encode_container(records):
    records = list(records)
    head = MAGIC + struct.pack("<HI", VERSION, len(records))
    return head + b"".join(encode_record(r) for r in records)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise ContainerTruncatedError(
                f"truncated container: needed {n} bytes for {what}, "
                f"{len(self.buf) - self.pos} available", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_container(buf):
    rd = _Reader(buf)
    magic = bytes(rd.take(4, "magic"))
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}", 0)
    (version,) = rd.unpack("<H", "version")
    if version != VERSION:
        raise ContainerVersionError(f"unsupported container version {version}, expected {VERSION}", 4)
    (count,) = rd.unpack("<I", "sample count")
    records = []
    for index in range(count):
        start = rd.pos
        (meta_len,) = rd.unpack("<I", f"record {index} metadata length")
        meta_raw = bytes(rd.take(meta_len, f"record {index} metadata"))
        (n_channels,) = rd.unpack("<H", f"record {index} channel count")
        raw_channels = []
        for _ in range(n_channels):
            chan_off = rd.pos
            (name_len,) = rd.unpack("<H", f"record {index} channel name length")
            name_raw = bytes(rd.take(name_len, f"record {index} channel name"))
            h, w, code = rd.unpack("<IIB", f"record {index} channel header")
            if code not in DTYPES:
                raise ContainerFormatError(f"record {index}: unknown dtype code {code}", chan_off)
            dtype = DTYPES[code]
            payload = rd.take(h * w * dtype.itemsize, f"record {index} channel payload")
            raw_channels.append((name_raw, h, w, dtype, payload, chan_off))
        end = rd.pos
        (crc,) = rd.unpack("<I", f"record {index} checksum")
        actual = zlib.crc32(rd.buf[start:end]) & 0xFFFFFFFF
        if actual != crc:
            raise ContainerChecksumError(
                f"checksum mismatch in record {index}: stored {crc:#010x}, computed {actual:#010x}",
                start, record_index=index)
        try:
            meta = json.loads(meta_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerFormatError(f"record {index}: invalid metadata ({exc})", start + 4)
        channels = {}
        for name_raw, h, w, dtype, payload, chan_off in raw_channels:
            arr = np.frombuffer(payload, dtype=dtype).reshape(h, w).copy()
            if dtype.kind == "f" and not np.all(np.isfinite(arr)):
                raise ContainerFormatError(f"record {index}: non-finite values in channel", chan_off)
            channels[name_raw.decode("utf-8")] = arr
        records.append(Record(meta, channels))
    if rd.pos != len(rd.buf):
        raise ContainerFormatError(f"{len(rd.buf) - rd.pos} trailing bytes after last record", rd.pos)
    return records


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file and rename, so readers never see a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, records):
    atomic_write_bytes(path, encode_container(records))


def read_container(path):
    with open(path, "rb") as fh:
        return decode_container(fh.read())
