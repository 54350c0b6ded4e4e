"""Sparse x dense multiplication kernels, one per storage format.

Each kernel realizes the access pattern its format is built for: CSR and
LIL accumulate output rows, COO and DOK scatter entry contributions, CSC
scatters column by column, DIA sweeps bands, BSR multiplies dense tiles.
All kernels accumulate in float64 with a fixed per-kernel summation order,
so results are deterministic per format; formats may differ from each
other below the 1e-9 comparison tolerance used throughout.

``dense_oracle`` is the correctness reference: it densifies the operand
and contracts with a fixed-order C loop (no BLAS dispatch).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .formats import (BsrMatrix, CooMatrix, CscMatrix, CsrMatrix, DiaMatrix,
                      DokMatrix, LilMatrix, SparseMatrix, StorageFormat)

# Scatter kernels process entries in slices this long to bound temporaries.
_SCATTER_CHUNK = 1 << 18


@dataclass(frozen=True)
class SpmmResult:
    """Product of one kernel invocation plus the kernel-only wall time."""

    product: np.ndarray
    kernel_format: StorageFormat
    elapsed: float


def _check_operands(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"dense operand must be 2-D, got shape {x.shape}")
    if a.n_cols != x.shape[0]:
        raise ValueError(
            f"cannot multiply {a.n_rows}x{a.n_cols} sparse by "
            f"{x.shape[0]}x{x.shape[1]} dense: inner dimensions differ")
    return x


def _spmm_coo(a: CooMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    row, col, val = a.row, a.col, a.data
    for s in range(0, a.nnz, _SCATTER_CHUNK):
        e = min(s + _SCATTER_CHUNK, a.nnz)
        np.add.at(out, row[s:e], val[s:e, None] * x[col[s:e]])
    return out


def _spmm_csr(a: CsrMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    indptr, indices, val = a.indptr, a.indices, a.data
    for i in range(a.n_rows):
        s, e = indptr[i], indptr[i + 1]
        if s != e:
            out[i] = val[s:e] @ x[indices[s:e]]
    return out


def _spmm_csc(a: CscMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    indptr, indices, val = a.indptr, a.indices, a.data
    for j in range(a.n_cols):
        s, e = indptr[j], indptr[j + 1]
        if s != e:
            # Row indices are unique within a column, so fancy += is safe.
            out[indices[s:e]] += val[s:e, None] * x[j]
    return out


def _spmm_dia(a: DiaMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    for k, off in enumerate(a.offsets.tolist()):
        j0 = max(0, off)
        j1 = min(a.n_cols, a.n_rows + off)
        if j0 < j1:
            out[j0 - off:j1 - off] += a.data[k, j0:j1, None] * x[j0:j1]
    return out


def _spmm_bsr(a: BsrMatrix, x):
    b = a.block_size
    d = x.shape[1]
    padded_cols = a.n_block_cols * b
    xp = np.zeros((padded_cols, d))
    xp[:a.n_cols] = x
    xb = xp.reshape(a.n_block_cols, b, d)
    outp = np.zeros((a.n_block_rows * b, d))
    indptr, indices, data = a.indptr, a.indices, a.data
    for bi in range(a.n_block_rows):
        s, e = indptr[bi], indptr[bi + 1]
        if s != e:
            outp[bi * b:(bi + 1) * b] = (data[s:e] @ xb[indices[s:e]]).sum(axis=0)
    return outp[:a.n_rows]


def _spmm_dok(a: DokMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    n = a.nnz
    if n == 0:
        return out
    # Iterate the map into index arrays, then scatter-accumulate.
    ij = np.fromiter(a.entries.keys(), dtype=np.dtype((np.int64, 2)), count=n)
    val = np.fromiter(a.entries.values(), dtype=np.float64, count=n)
    row, col = ij[:, 0], ij[:, 1]
    for s in range(0, n, _SCATTER_CHUNK):
        e = min(s + _SCATTER_CHUNK, n)
        np.add.at(out, row[s:e], val[s:e, None] * x[col[s:e]])
    return out


def _spmm_lil(a: LilMatrix, x):
    out = np.zeros((a.n_rows, x.shape[1]))
    for i, (cols, vals) in enumerate(zip(a.rows, a.rows_data)):
        if len(cols):
            out[i] = vals @ x[cols]
    return out


_KERNELS = {
    StorageFormat.COO: _spmm_coo,
    StorageFormat.CSR: _spmm_csr,
    StorageFormat.CSC: _spmm_csc,
    StorageFormat.DIA: _spmm_dia,
    StorageFormat.BSR: _spmm_bsr,
    StorageFormat.DOK: _spmm_dok,
    StorageFormat.LIL: _spmm_lil,
}


def spmm(a: SparseMatrix, x: np.ndarray) -> SpmmResult:
    """Multiply sparse ``a`` by dense ``x`` with the kernel matching ``a``'s format.

    The recorded ``elapsed`` covers the kernel only (a monotonic clock around
    the multiplication, excluding validation and any prior conversion).
    """
    x = _check_operands(a, x)
    kernel = _KERNELS[a.format]
    t0 = time.perf_counter()
    product = kernel(a, x)
    elapsed = time.perf_counter() - t0
    return SpmmResult(product, a.format, elapsed)


def dense_oracle(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Reference product: densify and contract in fixed row-major, ascending-k order.

    ``np.einsum`` without optimization compiles to a plain C loop nest (no
    BLAS), so the result is bit-reproducible for identical inputs and
    independent of every sparse kernel above.
    """
    x = _check_operands(a, x)
    return np.einsum("ik,kd->id", a.to_dense(), x, optimize=False)
