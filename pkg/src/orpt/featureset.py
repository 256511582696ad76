"""Binary feature-set files.

Layout (little-endian)::

    b"ORPTFEAT" | version u32 | count u32 | T u32 | F u32 | classes u32
    count x ( T*F float32 values | u8 label )
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ORPTFEAT"
VERSION = 1
_HEADER = struct.Struct("<8s5I")


class FormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureSet:
    values: np.ndarray  # (count, T, F) float32
    labels: np.ndarray  # (count,) uint8
    classes: int

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def timesteps(self) -> int:
        return self.values.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[2]

    def summary(self) -> str:
        return f"{self.count} {self.timesteps} {self.feature_dim} {self.classes}"


def _record_dtype(T, F):
    return np.dtype([("x", "<f4", (T, F)), ("y", "u1")])


class FeatureSetWriter:
    """Streams records to disk; the header count is patched on close."""

    def __init__(self, path, timesteps: int, feature_dim: int, classes: int):
        self.path = Path(path)
        self.T, self.F, self.classes = timesteps, feature_dim, classes
        self.count = 0
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, 0, self.T, self.F, classes))

    def write(self, values, labels) -> None:
        values = np.asarray(values)
        labels = np.asarray(labels)
        if values.ndim != 3 or values.shape[1:] != (self.T, self.F):
            raise FormatError(f"records of shape {values.shape[1:]} != ({self.T}, {self.F})")
        if labels.shape != (values.shape[0],):
            raise FormatError("labels and values disagree in length")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise FormatError(f"labels outside [0, {self.classes})")
        rec = np.empty(values.shape[0], dtype=_record_dtype(self.T, self.F))
        rec["x"] = values
        rec["y"] = labels
        self._fh.write(rec.tobytes())
        self.count += values.shape[0]

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self.count, self.T, self.F, self.classes))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_feature_set(path, values, labels, classes: int) -> None:
    values = np.asarray(values)
    with FeatureSetWriter(path, values.shape[1], values.shape[2], classes) as w:
        w.write(values, labels)


def read_feature_set(path) -> FeatureSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, count, T, F, classes = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 8")
    dt = _record_dtype(T, F)
    expected = _HEADER.size + count * dt.itemsize
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    rec = np.frombuffer(data, dtype=dt, count=count, offset=_HEADER.size)
    return FeatureSet(np.array(rec["x"], dtype=np.float32), np.array(rec["y"]), classes)
