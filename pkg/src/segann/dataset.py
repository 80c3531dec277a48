"""Vector datasets, attribute tables, predicates and exact search.

This module owns the raw (unquantized) view of the data: loading vector
files, generating synthetic attribute columns, evaluating predicates
against raw attribute values, and the exact filtered k-NN oracle that
every approximate result is ultimately judged against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import FormatError, PredicateError, TruncatedFileError

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# Operators accepted in predicate clauses. "between" is inclusive on both
# ends and takes two operands; all others take one.
OPERATORS = ("<", "<=", "=", ">", ">=", "between")

CATEGORY_LABELS = tuple(f"c{i:02d}" for i in range(16))


@dataclass
class VectorDataset:
    """A dense matrix of float32 vectors with implicit ids 0..n-1."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise FormatError("vector data must be a 2-D array")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)


@dataclass
class AttributeTable:
    """Columnar attribute data aligned with a vector dataset.

    columns[a] is a float64 array for numeric attributes or an object/str
    array of labels for categorical ones. kinds[a] names which.
    """

    columns: list
    kinds: list

    def __post_init__(self):
        if len(self.columns) != len(self.kinds):
            raise FormatError("one kind per column required")
        n = None
        for i, (col, kind) in enumerate(zip(self.columns, self.kinds)):
            if kind not in (NUMERIC, CATEGORICAL):
                raise FormatError(f"unknown attribute kind {kind!r}")
            col = np.asarray(col)
            if kind == NUMERIC:
                col = col.astype(np.float64)
            else:
                col = col.astype(str)
            self.columns[i] = col
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise FormatError("attribute columns must share one length")

    @property
    def n(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def a_count(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class PredicateClause:
    op: str
    operand: Union[float, str]
    operand_high: Optional[float] = None

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise PredicateError(f"unknown operator {self.op!r}")
        if self.op == "between":
            if self.operand_high is None:
                raise PredicateError("between requires two operands")
            if float(self.operand) > float(self.operand_high):
                raise PredicateError("between bounds out of order")
        elif self.operand_high is not None:
            raise PredicateError(f"operator {self.op!r} takes one operand")


@dataclass(frozen=True)
class QueryPredicate:
    """Conjunction of per-attribute clauses, keyed by attribute index."""

    clauses: tuple = ()

    @staticmethod
    def from_dict(d: dict) -> "QueryPredicate":
        items = []
        for key in sorted(d, key=int):
            spec = d[key]
            op = spec[0]
            if op == "B":
                op = "between"
            high = spec[2] if len(spec) > 2 else None
            items.append((int(key), PredicateClause(op, spec[1], high)))
        return QueryPredicate(tuple(items))

    def to_dict(self) -> dict:
        out = {}
        for idx, cl in self.clauses:
            spec = [cl.op, cl.operand]
            if cl.operand_high is not None:
                spec.append(cl.operand_high)
            out[str(idx)] = spec
        return out

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass
class HybridQuery:
    vector: np.ndarray
    predicate: QueryPredicate
    k: int

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).ravel()
        if self.k < 1:
            raise PredicateError("k must be at least 1")


@dataclass
class ResultSet:
    """Ids with their exact (or estimated) distances, ascending."""

    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.distances = np.asarray(self.distances, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.ids)


def clause_mask(column: np.ndarray, kind: str, clause: PredicateClause) -> np.ndarray:
    """Boolean mask of raw values satisfying one clause."""
    if kind == CATEGORICAL:
        if clause.op != "=":
            raise PredicateError(
                f"operator {clause.op!r} is not defined for categorical attributes"
            )
        return column == str(clause.operand)
    x = float(clause.operand)
    if clause.op == "<":
        return column < x
    if clause.op == "<=":
        return column <= x
    if clause.op == "=":
        return column == x
    if clause.op == ">":
        return column > x
    if clause.op == ">=":
        return column >= x
    return (column >= x) & (column <= float(clause.operand_high))


def predicate_mask(attrs: AttributeTable, predicate: QueryPredicate) -> np.ndarray:
    """Exact raw-value mask for a conjunctive predicate."""
    mask = np.ones(attrs.n, dtype=bool)
    for idx, clause in predicate.clauses:
        if not 0 <= idx < attrs.a_count:
            raise PredicateError(f"attribute index {idx} out of range")
        mask &= clause_mask(attrs.columns[idx], attrs.kinds[idx], clause)
    return mask


def selectivity(attrs: AttributeTable, predicate: QueryPredicate) -> float:
    return float(predicate_mask(attrs, predicate).mean())


def brute_force_search(
    dataset: VectorDataset,
    attrs: Optional[AttributeTable],
    query: HybridQuery,
    mask: Optional[np.ndarray] = None,
) -> ResultSet:
    """Exact filtered k-NN. Ties in distance break toward the lower id."""
    if mask is None:
        if attrs is not None and query.predicate.clauses:
            mask = predicate_mask(attrs, query.predicate)
        else:
            mask = np.ones(dataset.n, dtype=bool)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return ResultSet(np.empty(0, np.int64), np.empty(0, np.float64))
    diffs = dataset.values[rows].astype(np.float64) - query.vector
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    order = np.lexsort((rows, d2))[: query.k]
    return ResultSet(rows[order], np.sqrt(d2[order]))


def recall_at_k(truth_ids: Sequence[int], result_ids: Sequence[int], k: int) -> float:
    """|truth ∩ result| over min(k, |truth|); 1.0 when nothing qualifies."""
    truth = set(int(i) for i in list(truth_ids)[:k])
    if not truth:
        return 1.0
    got = set(int(i) for i in list(result_ids)[:k])
    return len(truth & got) / min(k, len(truth))


def generate_attributes(
    n: int, a_count: int, seed: int = 0, kinds: Optional[Sequence[str]] = None
) -> AttributeTable:
    """Synthetic attribute table: numeric uniform over [0, 100), categorical
    uniform over 16 labels. Deterministic for a given seed."""
    if kinds is None:
        kinds = [NUMERIC] * a_count
    if len(kinds) != a_count:
        raise FormatError("kinds length must equal a_count")
    rng = np.random.default_rng(seed)
    cols = []
    for kind in kinds:
        if kind == NUMERIC:
            cols.append(rng.uniform(0.0, 100.0, size=n))
        elif kind == CATEGORICAL:
            idx = rng.integers(0, len(CATEGORY_LABELS), size=n)
            cols.append(np.array(CATEGORY_LABELS, dtype=object)[idx].astype(str))
        else:
            raise FormatError(f"unknown attribute kind {kind!r}")
    return AttributeTable(cols, list(kinds))


def _read_prefixed(path: str, value_dtype, widen) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise TruncatedFileError(f"{path}: empty file")
    if raw.size < 4:
        raise TruncatedFileError(f"{path}: missing dimension header")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise FormatError(f"{path}: non-positive dimension {d}")
    item = np.dtype(value_dtype).itemsize
    rec = 4 + d * item
    if raw.size % rec != 0:
        raise TruncatedFileError(f"{path}: size {raw.size} is not a multiple of record size {rec}")
    table = raw.reshape(-1, rec)
    dims = table[:, :4].copy().view("<i4").ravel()
    if not np.all(dims == d):
        bad = int(np.flatnonzero(dims != d)[0])
        raise FormatError(f"{path}: record {bad} declares dimension {int(dims[bad])}, expected {d}")
    vals = table[:, 4:].copy().view(value_dtype).reshape(-1, d)
    return vals.astype(widen)


def read_fvecs(path: str) -> VectorDataset:
    """float32 vectors, each record: little-endian int32 dim then d floats."""
    return VectorDataset(_read_prefixed(path, "<f4", np.float32))


def read_bvecs(path: str) -> VectorDataset:
    """uint8 vectors widened to float32; same framing as read_fvecs."""
    return VectorDataset(_read_prefixed(path, np.uint8, np.float32))


def write_fvecs(path: str, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    n, d = values.shape
    out = np.empty((n, 1 + d), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = values.view("<i4")
    out.tofile(path)


def load_queries(path: str, default_k: int = 10) -> list:
    """Read a JSONL query file: one object per line with a "vector" list,
    an optional "predicate" clause map, and an optional per-query "k"."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no + 1}: invalid JSON ({exc})") from None
            if "vector" not in rec:
                raise FormatError(f"{path}:{line_no + 1}: missing vector")
            pred = QueryPredicate.from_dict(rec.get("predicate", {}))
            out.append(HybridQuery(rec["vector"], pred, int(rec.get("k", default_k))))
    return out


def save_queries(path: str, queries: Sequence[HybridQuery]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            rec = {
                "vector": [float(v) for v in q.vector],
                "k": q.k,
                "predicate": q.predicate.to_dict(),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_ivecs(path: str) -> list:
    """Ground-truth id lists; -1 entries are padding and are dropped."""
    raw = np.fromfile(path, dtype="<i4")
    rows = []
    pos = 0
    while pos < raw.size:
        d = int(raw[pos])
        if d < 0:
            raise FormatError(f"{path}: negative record length {d}")
        if pos + 1 + d > raw.size:
            raise TruncatedFileError(f"{path}: record at word {pos} runs past end of file")
        row = raw[pos + 1 : pos + 1 + d]
        rows.append(row[row >= 0].astype(np.int64))
        pos += 1 + d
    return rows


def write_ivecs(path: str, rows: Sequence[Sequence[int]], width: Optional[int] = None) -> None:
    """Fixed-width id records; short rows are right-padded with -1."""
    rows = [np.asarray(r, dtype="<i4") for r in rows]
    if width is None:
        width = max((len(r) for r in rows), default=0)
    out = np.full((len(rows), 1 + width), -1, dtype="<i4")
    out[:, 0] = width
    for i, r in enumerate(rows):
        if len(r) > width:
            raise FormatError(f"row {i} longer than declared width {width}")
        out[i, 1 : 1 + len(r)] = r
    out.tofile(path)
