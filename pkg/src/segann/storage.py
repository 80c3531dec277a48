"""On-disk formats: partition index files, attribute files, manifest,
and the full-precision vector store.

All binary layouts are little-endian with explicit dtypes, so an index
built twice from the same inputs is byte-identical. The vector store is a
flat float32 matrix addressed by fixed stride (id * dim * 4 bytes); reads
go through a handle that counts every random read for the cost model.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import AttributeTable, CATEGORICAL, NUMERIC
from .errors import FormatError, TruncatedFileError
from .osq import SegmentMatrix, segment_dtype
from .partitioner import ThresholdModel
from .quantizer import AttributeQIndex, BitAllocation, Lloyd1D
from .transform import KltModel, StandardizeModel

PARTITION_MAGIC = b"SGP1"
ATTR_INDEX_MAGIC = b"SGA1"
ATTR_TABLE_MAGIC = "SGT1"
MANIFEST_MAGIC = "SGM1"


def _write_array(fh, arr: np.ndarray, dtype) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_array(fh, count: int, dtype) -> np.ndarray:
    dt = np.dtype(dtype)
    raw = fh.read(count * dt.itemsize)
    if len(raw) != count * dt.itemsize:
        raise TruncatedFileError("index file ended mid-array")
    return np.frombuffer(raw, dtype=dt).copy()


@dataclass
class PartitionPayload:
    """Everything a processor needs to search one partition."""

    members: np.ndarray            # global ids, ascending
    klt: KltModel
    standardize: StandardizeModel
    alloc: BitAllocation
    quantizers: list               # Lloyd1D per dimension
    matrix: SegmentMatrix
    sketch: SegmentMatrix          # 1-bit sign sketch

    @property
    def n(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.alloc.dim


def write_partition(path: str, payload: PartitionPayload) -> None:
    n = payload.n
    d = payload.dim
    s = payload.alloc.segment_bits
    b = payload.alloc.budget
    with open(path, "wb") as fh:
        fh.write(PARTITION_MAGIC)
        fh.write(struct.pack("<IQIII", 1, n, d, s, b))
        _write_array(fh, payload.alloc.bits, "<u2")
        for qz in payload.quantizers:
            fh.write(struct.pack("<I?", qz.boundaries.size, qz.degraded))
            _write_array(fh, qz.boundaries, "<f8")
            _write_array(fh, qz.centroids, "<f8")
        _write_array(fh, payload.klt.mean, "<f8")
        _write_array(fh, payload.klt.eigenvalues, "<f8")
        _write_array(fh, payload.klt.basis, "<f8")
        _write_array(fh, payload.standardize.mean, "<f8")
        _write_array(fh, payload.standardize.std, "<f8")
        _write_array(fh, payload.standardize.zero_variance, np.uint8)
        dt = np.dtype(segment_dtype(s)).newbyteorder("<")
        _write_array(fh, payload.matrix.segments, dt)
        fh.write(struct.pack("<I", payload.sketch.segment_count))
        _write_array(fh, payload.sketch.segments, dt)
        _write_array(fh, payload.members, "<i8")


def read_partition(path: str) -> PartitionPayload:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PARTITION_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(struct.calcsize("<IQIII"))
        if len(header) != struct.calcsize("<IQIII"):
            raise TruncatedFileError(f"{path}: short header")
        version, n, d, s, b = struct.unpack("<IQIII", header)
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        bits = _read_array(fh, d, "<u2").astype(np.int64)
        alloc = BitAllocation(bits, s)
        if alloc.budget != b:
            raise FormatError(f"{path}: bit budget mismatch")
        quantizers = []
        for _ in range(d):
            meta = fh.read(struct.calcsize("<I?"))
            nb, degraded = struct.unpack("<I?", meta)
            bounds = _read_array(fh, nb, "<f8")
            cents = _read_array(fh, nb - 1, "<f8")
            quantizers.append(Lloyd1D(bounds, cents, [], bool(degraded)))
        klt_mean = _read_array(fh, d, "<f8")
        klt_eig = _read_array(fh, d, "<f8")
        klt_basis = _read_array(fh, d * d, "<f8").reshape(d, d)
        klt = KltModel(klt_mean, klt_basis, klt_eig)
        std = StandardizeModel(
            _read_array(fh, d, "<f8"),
            _read_array(fh, d, "<f8"),
            _read_array(fh, d, np.uint8).astype(bool),
        )
        dt = np.dtype(segment_dtype(s)).newbyteorder("<")
        g = alloc.segments
        matrix = SegmentMatrix(_read_array(fh, n * g, dt).reshape(n, g), s, b)
        (g2,) = struct.unpack("<I", fh.read(4))
        sketch = SegmentMatrix(_read_array(fh, n * g2, dt).reshape(n, g2), s, d)
        members = _read_array(fh, n, "<i8")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    return PartitionPayload(members, klt, std, alloc, quantizers, matrix, sketch)


def write_attribute_index(path: str, index: AttributeQIndex) -> None:
    n, a = index.n, index.a_count
    m = index.max_cells
    with open(path, "wb") as fh:
        fh.write(ATTR_INDEX_MAGIC)
        fh.write(struct.pack("<IQII", 1, n, a, m))
        kinds = np.array(
            [0 if k == NUMERIC else 1 for k in index.kinds], dtype=np.uint8
        )
        _write_array(fh, kinds, np.uint8)
        _write_array(fh, index.cells, "<u4")
        _write_array(fh, index.degraded, np.uint8)
        _write_array(fh, index.boundary_table, "<f8")
        _write_array(fh, index.codes, "<i4")
        for i in range(a):
            labels = index.cat_maps[i]
            if labels is None:
                fh.write(struct.pack("<I", 0))
            else:
                fh.write(struct.pack("<I", labels.size))
                for lab in labels:
                    enc = str(lab).encode("utf-8")
                    fh.write(struct.pack("<H", len(enc)))
                    fh.write(enc)


def read_attribute_index(path: str) -> AttributeQIndex:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != ATTR_INDEX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, n, a, m = struct.unpack("<IQII", fh.read(struct.calcsize("<IQII")))
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        kinds_raw = _read_array(fh, a, np.uint8)
        cells = _read_array(fh, a, "<u4").astype(np.int64)
        degraded = _read_array(fh, a, np.uint8).astype(bool)
        table = _read_array(fh, (m + 1) * a, "<f8").reshape(m + 1, a)
        codes = _read_array(fh, n * a, "<i4").reshape(n, a)
        cat_maps = []
        boundaries = []
        for i in range(a):
            (count,) = struct.unpack("<I", fh.read(4))
            if count == 0:
                cat_maps.append(None)
                boundaries.append(table[: cells[i] + 1, i].copy())
            else:
                labels = []
                for _ in range(count):
                    (ln,) = struct.unpack("<H", fh.read(2))
                    labels.append(fh.read(ln).decode("utf-8"))
                cat_maps.append(np.array(labels))
                boundaries.append(None)
        kinds = [NUMERIC if k == 0 else CATEGORICAL for k in kinds_raw]
    return AttributeQIndex(table, codes, cells, kinds, cat_maps, boundaries, degraded)


def write_attribute_table(path: str, attrs: AttributeTable) -> None:
    """Raw attribute table: one JSON header line, then binary columns in
    order (numeric as float64, categorical as int32 codes into the header's
    label lists)."""
    cat_values = []
    for col, kind in zip(attrs.columns, attrs.kinds):
        cat_values.append(sorted(set(col.tolist())) if kind == CATEGORICAL else None)
    header = {
        "magic": ATTR_TABLE_MAGIC,
        "n": attrs.n,
        "a_count": attrs.a_count,
        "kinds": list(attrs.kinds),
        "cat_values": cat_values,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for i, (col, kind) in enumerate(zip(attrs.columns, attrs.kinds)):
            if kind == NUMERIC:
                _write_array(fh, col, "<f8")
            else:
                codes = np.searchsorted(np.array(cat_values[i]), col.astype(str))
                _write_array(fh, codes, "<i4")


def read_attribute_table(path: str) -> AttributeTable:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != ATTR_TABLE_MAGIC:
            raise FormatError(f"{path}: bad magic")
        n = header["n"]
        cols = []
        for i, kind in enumerate(header["kinds"]):
            if kind == NUMERIC:
                cols.append(_read_array(fh, n, "<f8"))
            else:
                codes = _read_array(fh, n, "<i4")
                labels = np.array(header["cat_values"][i])
                cols.append(labels[codes].astype(str))
    return AttributeTable(cols, header["kinds"])


def encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    return {
        "dtype": arr.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


class VectorStore:
    """Fixed-stride float32 vector file with counted random reads."""

    def __init__(self, path: str, dim: int):
        self.path = path
        self.dim = dim
        self.record_bytes = dim * 4
        self.reads = 0
        self.bytes_read = 0
        self._fh = None

    def _handle(self):
        if self._fh is None:
            self._fh = open(self.path, "rb")
        return self._fh

    def read(self, ids: np.ndarray) -> np.ndarray:
        """Fetch full-precision vectors one record at a time."""
        fh = self._handle()
        out = np.empty((len(ids), self.dim), dtype=np.float32)
        for i, vid in enumerate(np.asarray(ids, dtype=np.int64)):
            fh.seek(int(vid) * self.record_bytes)
            raw = fh.read(self.record_bytes)
            if len(raw) != self.record_bytes:
                raise TruncatedFileError(f"{self.path}: vector {int(vid)} out of range")
            out[i] = np.frombuffer(raw, dtype="<f4")
            self.reads += 1
            self.bytes_read += self.record_bytes
        return out

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def write_vector_store(path: str, values: np.ndarray) -> None:
    np.ascontiguousarray(values, dtype="<f4").tofile(path)


def write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("magic") != MANIFEST_MAGIC:
        raise FormatError(f"{path}: not an index manifest")
    return manifest


def manifest_fingerprint(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def resolve(manifest_path: str, relative: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), relative)
