"""Sparse matrix storage formats and lossless conversion between them.

Seven formats are supported: COO, CSR, CSC, DIA, BSR, DOK and LIL. All of
them describe the same logical set of (row, col, value) entries; converting
between formats never changes that set. Values are float64, indices int64.

Matrices are treated as immutable after construction: conversions always
build new objects (or return the input unchanged when the target format
matches), and no method mutates stored arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

# Storage widths of the analytic memory model: 8-byte indices, 8-byte values.
INDEX_BYTES = 8
VALUE_BYTES = 8

# Hash-map load factor overhead applied to DOK storage.
DOK_OVERHEAD = 1.5

# Per-row header cost charged to LIL storage.
LIL_ROW_HEADER_BYTES = 24

# Refuse DIA conversion when the band array would exceed this many slots
# per stored nonzero.
DIA_GUARD_FACTOR = 64

DEFAULT_BLOCK_SIZE = 2


class StorageFormat(enum.IntEnum):
    """The seven candidate storage formats; codes double as class labels."""

    COO = 0
    CSR = 1
    CSC = 2
    DIA = 3
    BSR = 4
    DOK = 5
    LIL = 6


class DiaBlowupError(ValueError):
    """Raised when a DIA conversion would allocate a pathologically large band array."""


def _as_index_array(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.int64))


def _as_value_array(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


class _SparseBase:
    """Shared behaviour of all sparse format classes."""

    format: StorageFormat

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def to_triplets(self):
        """Logical entry set as a list of (row, col, value), sorted by (row, col)."""
        coo = self.to_coo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def to_dense(self):
        """Densify into a row-major float64 array."""
        coo = self.to_coo()
        out = np.zeros((self.n_rows, self.n_cols))
        out[coo.row, coo.col] = coo.data
        return out

    def __repr__(self):
        return (
            f"{type(self).__name__}({self.n_rows}x{self.n_cols}, nnz={self.nnz})"
        )


@dataclass(frozen=True, eq=False, repr=False)
class CooMatrix(_SparseBase):
    """Coordinate list: parallel (row, col, value) arrays sorted by (row, col).

    Invariants: indices in bounds, no duplicate coordinates, no stored zeros.
    Use :func:`from_triplets` to build one from unsorted/duplicated input.
    """

    n_rows: int
    n_cols: int
    row: np.ndarray
    col: np.ndarray
    data: np.ndarray

    format = StorageFormat.COO

    def __post_init__(self):
        if not (len(self.row) == len(self.col) == len(self.data)):
            raise ValueError("row/col/data arrays must have equal length")

    @property
    def nnz(self):
        return len(self.data)

    def to_coo(self):
        return self


@dataclass(frozen=True, eq=False, repr=False)
class CsrMatrix(_SparseBase):
    """Compressed sparse row: row pointers plus column indices and values."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    format = StorageFormat.CSR

    def __post_init__(self):
        if len(self.indptr) != self.n_rows + 1:
            raise ValueError("indptr must have length n_rows + 1")
        if len(self.indices) != len(self.data):
            raise ValueError("indices/data arrays must have equal length")

    @property
    def nnz(self):
        return len(self.data)

    def to_coo(self):
        counts = np.diff(self.indptr)
        row = np.repeat(np.arange(self.n_rows, dtype=np.int64), counts)
        # CSR order (row major, columns ascending) is already COO order.
        return CooMatrix(self.n_rows, self.n_cols, row,
                         self.indices.copy(), self.data.copy())


@dataclass(frozen=True, eq=False, repr=False)
class CscMatrix(_SparseBase):
    """Compressed sparse column: the transpose-ordered mirror of CSR."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    format = StorageFormat.CSC

    def __post_init__(self):
        if len(self.indptr) != self.n_cols + 1:
            raise ValueError("indptr must have length n_cols + 1")
        if len(self.indices) != len(self.data):
            raise ValueError("indices/data arrays must have equal length")

    @property
    def nnz(self):
        return len(self.data)

    def to_coo(self):
        counts = np.diff(self.indptr)
        col = np.repeat(np.arange(self.n_cols, dtype=np.int64), counts)
        row = self.indices
        order = np.lexsort((col, row))
        return CooMatrix(self.n_rows, self.n_cols, row[order].copy(),
                         col[order].copy(), self.data[order].copy())


@dataclass(frozen=True, eq=False, repr=False)
class DiaMatrix(_SparseBase):
    """Diagonal storage: one band per distinct (col - row) offset.

    ``data[k, j]`` holds the element at ``(j - offsets[k], j)``; slots that
    fall outside the matrix or carry no entry are zero. ``nnz`` is recorded
    at construction because band fill is not recoverable from shapes alone.
    """

    n_rows: int
    n_cols: int
    offsets: np.ndarray
    data: np.ndarray
    nnz: int

    format = StorageFormat.DIA

    def __post_init__(self):
        if self.data.shape != (len(self.offsets), self.n_cols):
            raise ValueError("data must have shape (n_diags, n_cols)")

    @property
    def n_diags(self):
        return len(self.offsets)

    def to_coo(self):
        rows, cols, vals = [], [], []
        for k, off in enumerate(self.offsets.tolist()):
            j0 = max(0, off)
            j1 = min(self.n_cols, self.n_rows + off)
            if j0 >= j1:
                continue
            band = self.data[k, j0:j1]
            nz = np.nonzero(band)[0]
            if len(nz) == 0:
                continue
            j = nz + j0
            cols.append(j)
            rows.append(j - off)
            vals.append(band[nz])
        if not rows:
            return _empty_coo(self.n_rows, self.n_cols)
        row = np.concatenate(rows)
        col = np.concatenate(cols)
        val = np.concatenate(vals)
        order = np.lexsort((col, row))
        return CooMatrix(self.n_rows, self.n_cols, row[order], col[order], val[order])


@dataclass(frozen=True, eq=False, repr=False)
class BsrMatrix(_SparseBase):
    """Block sparse row: CSR over dense ``block_size`` x ``block_size`` tiles.

    Logical dimensions are padded up to block multiples internally; padding
    cells are zero and never reported as entries.
    """

    n_rows: int
    n_cols: int
    block_size: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    nnz: int

    format = StorageFormat.BSR

    def __post_init__(self):
        b = self.block_size
        if b < 1:
            raise ValueError("block_size must be >= 1")
        if self.data.shape[1:] != (b, b):
            raise ValueError("blocks must be square of side block_size")

    @property
    def n_block_rows(self):
        return len(self.indptr) - 1

    @property
    def n_block_cols(self):
        return -(-self.n_cols // self.block_size) if self.n_cols else 0

    def to_coo(self):
        if len(self.indices) == 0:
            return _empty_coo(self.n_rows, self.n_cols)
        b = self.block_size
        counts = np.diff(self.indptr)
        block_row = np.repeat(np.arange(self.n_block_rows, dtype=np.int64), counts)
        blk, i, j = np.nonzero(self.data)
        row = block_row[blk] * b + i
        col = self.indices[blk] * b + j
        val = self.data[blk, i, j]
        order = np.lexsort((col, row))
        return CooMatrix(self.n_rows, self.n_cols, row[order], col[order], val[order])


@dataclass(frozen=True, eq=False, repr=False)
class DokMatrix(_SparseBase):
    """Dictionary of keys: a hash map from (row, col) to value."""

    n_rows: int
    n_cols: int
    entries: dict

    format = StorageFormat.DOK

    @property
    def nnz(self):
        return len(self.entries)

    def to_coo(self):
        if not self.entries:
            return _empty_coo(self.n_rows, self.n_cols)
        ij = np.fromiter(self.entries.keys(), dtype=np.dtype((np.int64, 2)),
                         count=len(self.entries))
        val = np.fromiter(self.entries.values(), dtype=np.float64,
                          count=len(self.entries))
        row, col = ij[:, 0], ij[:, 1]
        order = np.lexsort((col, row))
        return CooMatrix(self.n_rows, self.n_cols, row[order].copy(),
                         col[order].copy(), val[order])


@dataclass(frozen=True, eq=False, repr=False)
class LilMatrix(_SparseBase):
    """Row-list storage: per-row arrays of column indices (ascending) and values."""

    n_rows: int
    n_cols: int
    rows: list = field(default_factory=list)
    rows_data: list = field(default_factory=list)

    format = StorageFormat.LIL

    def __post_init__(self):
        if len(self.rows) != self.n_rows or len(self.rows_data) != self.n_rows:
            raise ValueError("need one column list and one value list per row")

    @property
    def nnz(self):
        return sum(len(r) for r in self.rows)

    def to_coo(self):
        if self.nnz == 0:
            return _empty_coo(self.n_rows, self.n_cols)
        counts = np.array([len(r) for r in self.rows], dtype=np.int64)
        row = np.repeat(np.arange(self.n_rows, dtype=np.int64), counts)
        col = np.concatenate([r for r in self.rows if len(r)])
        val = np.concatenate([v for v in self.rows_data if len(v)])
        # Rows are stored in order with ascending columns, so this is sorted.
        return CooMatrix(self.n_rows, self.n_cols, row, col.astype(np.int64),
                         val.astype(np.float64))


SparseMatrix = Union[CooMatrix, CsrMatrix, CscMatrix, DiaMatrix,
                     BsrMatrix, DokMatrix, LilMatrix]

#: Dense operands are plain 2-D row-major float64 numpy arrays.
DenseMatrix = np.ndarray


def _empty_coo(n_rows, n_cols):
    z = np.zeros(0, dtype=np.int64)
    return CooMatrix(n_rows, n_cols, z, z.copy(), np.zeros(0))


def from_triplets(n_rows: int, n_cols: int, triplets) -> CooMatrix:
    """Build a COO matrix from (row, col, value) triplets.

    Duplicate coordinates are summed; entries that sum to exactly zero are
    dropped; the result is sorted by (row, col). Raises ``ValueError``
    naming the offending triplet when an index is out of bounds.
    """
    if n_rows < 0 or n_cols < 0:
        raise ValueError("matrix dimensions must be nonnegative")
    triplets = list(triplets) if not isinstance(triplets, (list, tuple)) else triplets
    if len(triplets) == 0:
        return _empty_coo(n_rows, n_cols)
    arr = np.asarray(triplets, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("triplets must be (row, col, value) tuples")
    row = arr[:, 0].astype(np.int64)
    col = arr[:, 1].astype(np.int64)
    val = arr[:, 2].copy()
    bad = np.nonzero((row < 0) | (row >= n_rows))[0]
    if len(bad):
        k = bad[0]
        raise ValueError(
            f"row {row[k]} out of bounds for {n_rows}x{n_cols} matrix "
            f"in triplet ({row[k]}, {col[k]}, {val[k]})")
    bad = np.nonzero((col < 0) | (col >= n_cols))[0]
    if len(bad):
        k = bad[0]
        raise ValueError(
            f"column {col[k]} out of bounds for {n_rows}x{n_cols} matrix "
            f"in triplet ({row[k]}, {col[k]}, {val[k]})")
    key = row * np.int64(n_cols) + col
    uniq, inverse = np.unique(key, return_inverse=True)
    sums = np.bincount(inverse, weights=val, minlength=len(uniq))
    keep = sums != 0.0
    uniq = uniq[keep]
    return CooMatrix(n_rows, n_cols, (uniq // n_cols).astype(np.int64),
                     (uniq % n_cols).astype(np.int64), sums[keep])


def coo_from_arrays(n_rows, n_cols, row, col, data) -> CooMatrix:
    """Fast COO constructor for callers that guarantee the invariants.

    ``row``/``col``/``data`` must already be in-bounds, duplicate free,
    zero free and sorted by (row, col); no checks are performed.
    """
    return CooMatrix(n_rows, n_cols, _as_index_array(row),
                     _as_index_array(col), _as_value_array(data))


# ---------------------------------------------------------------------------
# format builders (each consumes a canonical COO matrix)
# ---------------------------------------------------------------------------

def _coo_to_csr(coo: CooMatrix) -> CsrMatrix:
    counts = np.bincount(coo.row, minlength=coo.n_rows) if coo.nnz else \
        np.zeros(coo.n_rows, dtype=np.int64)
    indptr = np.zeros(coo.n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return CsrMatrix(coo.n_rows, coo.n_cols, indptr, coo.col.copy(), coo.data.copy())


def _coo_to_csc(coo: CooMatrix) -> CscMatrix:
    order = np.lexsort((coo.row, coo.col))
    counts = np.bincount(coo.col, minlength=coo.n_cols) if coo.nnz else \
        np.zeros(coo.n_cols, dtype=np.int64)
    indptr = np.zeros(coo.n_cols + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return CscMatrix(coo.n_rows, coo.n_cols, indptr,
                     coo.row[order].copy(), coo.data[order].copy())


def _coo_to_dia(coo: CooMatrix, guard_factor=DIA_GUARD_FACTOR) -> DiaMatrix:
    offs = coo.col - coo.row
    offsets = np.unique(offs)
    n_diags = len(offsets)
    if n_diags * coo.n_cols > guard_factor * coo.nnz:
        raise DiaBlowupError(
            f"DIA blowup: {n_diags} diagonals x {coo.n_cols} columns exceeds "
            f"{guard_factor} slots per nonzero ({coo.nnz} nnz)")
    data = np.zeros((n_diags, coo.n_cols))
    if coo.nnz:
        k = np.searchsorted(offsets, offs)
        data[k, coo.col] = coo.data
    return DiaMatrix(coo.n_rows, coo.n_cols, offsets, data, coo.nnz)


def _coo_to_bsr(coo: CooMatrix, block_size=DEFAULT_BLOCK_SIZE) -> BsrMatrix:
    b = int(block_size)
    if b < 1:
        raise ValueError("block_size must be >= 1")
    n_block_rows = -(-coo.n_rows // b) if coo.n_rows else 0
    n_block_cols = -(-coo.n_cols // b) if coo.n_cols else 0
    if coo.nnz == 0:
        return BsrMatrix(coo.n_rows, coo.n_cols, b,
                         np.zeros(n_block_rows + 1, dtype=np.int64),
                         np.zeros(0, dtype=np.int64),
                         np.zeros((0, b, b)), 0)
    brow = coo.row // b
    bcol = coo.col // b
    key = brow * np.int64(n_block_cols) + bcol
    uniq, inverse = np.unique(key, return_inverse=True)
    data = np.zeros((len(uniq), b, b))
    data[inverse, coo.row % b, coo.col % b] = coo.data
    counts = np.bincount((uniq // n_block_cols).astype(np.int64),
                         minlength=n_block_rows)
    indptr = np.zeros(n_block_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return BsrMatrix(coo.n_rows, coo.n_cols, b, indptr,
                     (uniq % n_block_cols).astype(np.int64), data, coo.nnz)


def _coo_to_dok(coo: CooMatrix) -> DokMatrix:
    entries = dict(zip(zip(coo.row.tolist(), coo.col.tolist()),
                       coo.data.tolist()))
    return DokMatrix(coo.n_rows, coo.n_cols, entries)


def _coo_to_lil(coo: CooMatrix) -> LilMatrix:
    counts = np.bincount(coo.row, minlength=coo.n_rows) if coo.nnz else \
        np.zeros(coo.n_rows, dtype=np.int64)
    bounds = np.zeros(coo.n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    rows = [coo.col[bounds[i]:bounds[i + 1]].copy() for i in range(coo.n_rows)]
    rows_data = [coo.data[bounds[i]:bounds[i + 1]].copy() for i in range(coo.n_rows)]
    return LilMatrix(coo.n_rows, coo.n_cols, rows, rows_data)


_BUILDERS = {
    StorageFormat.COO: lambda coo, **kw: coo,
    StorageFormat.CSR: lambda coo, **kw: _coo_to_csr(coo),
    StorageFormat.CSC: lambda coo, **kw: _coo_to_csc(coo),
    StorageFormat.DIA: lambda coo, **kw: _coo_to_dia(
        coo, kw.get("dia_guard_factor", DIA_GUARD_FACTOR)),
    StorageFormat.BSR: lambda coo, **kw: _coo_to_bsr(
        coo, kw.get("block_size", DEFAULT_BLOCK_SIZE)),
    StorageFormat.DOK: lambda coo, **kw: _coo_to_dok(coo),
    StorageFormat.LIL: lambda coo, **kw: _coo_to_lil(coo),
}


def convert(m: SparseMatrix, target: StorageFormat, *,
            dia_guard_factor: int = DIA_GUARD_FACTOR,
            block_size: int = DEFAULT_BLOCK_SIZE) -> SparseMatrix:
    """Convert ``m`` to the target storage format, preserving the entry set.

    Converting to the current format returns ``m`` unchanged. A DIA target
    whose projected band array would exceed ``dia_guard_factor`` slots per
    nonzero raises :class:`DiaBlowupError` instead of allocating it.
    """
    target = StorageFormat(target)
    if m.format == target:
        return m
    return _BUILDERS[target](m.to_coo(), dia_guard_factor=dia_guard_factor,
                             block_size=block_size)


def memory_footprint(m: SparseMatrix) -> int:
    """Analytic storage size in bytes (8-byte indices and values).

    The model is deterministic and platform independent:

    - COO: 24*nnz
    - CSR: 16*nnz + 8*(n_rows+1)
    - CSC: 16*nnz + 8*(n_cols+1)
    - DIA: 8*n_diags*n_cols + 8*n_diags
    - BSR: 8*n_blocks*b^2 + 8*n_blocks + 8*(ceil(n_rows/b)+1)
    - DOK: 1.5 * 24*nnz (hash-map load factor overhead)
    - LIL: 16*nnz + 24*n_rows (per-row headers)
    """
    fmt = m.format
    if fmt == StorageFormat.COO:
        return (2 * INDEX_BYTES + VALUE_BYTES) * m.nnz
    if fmt == StorageFormat.CSR:
        return (INDEX_BYTES + VALUE_BYTES) * m.nnz + INDEX_BYTES * (m.n_rows + 1)
    if fmt == StorageFormat.CSC:
        return (INDEX_BYTES + VALUE_BYTES) * m.nnz + INDEX_BYTES * (m.n_cols + 1)
    if fmt == StorageFormat.DIA:
        return VALUE_BYTES * m.n_diags * m.n_cols + INDEX_BYTES * m.n_diags
    if fmt == StorageFormat.BSR:
        n_blocks = len(m.indices)
        return (VALUE_BYTES * n_blocks * m.block_size ** 2
                + INDEX_BYTES * n_blocks
                + INDEX_BYTES * (m.n_block_rows + 1))
    if fmt == StorageFormat.DOK:
        return int(DOK_OVERHEAD * (2 * INDEX_BYTES + VALUE_BYTES) * m.nnz)
    if fmt == StorageFormat.LIL:
        return (INDEX_BYTES + VALUE_BYTES) * m.nnz + LIL_ROW_HEADER_BYTES * m.n_rows
    raise ValueError(f"unknown storage format {fmt!r}")


def projected_dia_footprint(m: SparseMatrix) -> int:
    """DIA byte count the conversion *would* need, without materializing it."""
    coo = m.to_coo()
    n_diags = len(np.unique(coo.col - coo.row)) if coo.nnz else 0
    return VALUE_BYTES * n_diags * coo.n_cols + INDEX_BYTES * n_diags
