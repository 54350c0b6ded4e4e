"""Structural matrix features driving format prediction.

Nineteen numbers summarize the nonzero structure of a matrix: dimensions,
population, diagonal count, per-row/per-column nonzero statistics, fill
ratios of diagonal and column-packed storage, adjacent-row/column
variation, density, and dispersion of row population. They are a pure
function of the logical entry set, so every storage format of the same
matrix yields identical values.

Degenerate inputs (no nonzeros, a single row) map all affected features to
zero so downstream models never see non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .formats import SparseMatrix

FEATURE_NAMES = (
    "num_rows",        # F1
    "num_cols",        # F2
    "nnz",             # F3
    "n_diags",         # F4
    "avg_row_nnz",     # F5
    "max_row_nnz",     # F6
    "min_row_nnz",     # F7
    "std_row_nnz",     # F8
    "avg_col_nnz",     # F9
    "max_col_nnz",     # F10
    "min_col_nnz",     # F11
    "std_col_nnz",     # F12
    "diag_fill",       # F13: nnz / (n_diags * num_cols)
    "col_packed_fill", # F14: nnz / (max_row_nnz * num_rows)
    "row_bounce",      # F15: mean |row_nnz[i+1] - row_nnz[i]|
    "col_bounce",      # F16: mean |col_nnz[j+1] - col_nnz[j]|
    "density",         # F17
    "row_cv",          # F18: std_row_nnz / avg_row_nnz
    "max_row_excess",  # F19: max_row_nnz - avg_row_nnz
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    num_rows: float
    num_cols: float
    nnz: float
    n_diags: float
    avg_row_nnz: float
    max_row_nnz: float
    min_row_nnz: float
    std_row_nnz: float
    avg_col_nnz: float
    max_col_nnz: float
    min_col_nnz: float
    std_col_nnz: float
    diag_fill: float
    col_packed_fill: float
    row_bounce: float
    col_bounce: float
    density: float
    row_cv: float
    max_row_excess: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} feature values, "
                             f"got shape {values.shape}")
        return cls(*(float(v) for v in values))


def extract_features(m: SparseMatrix) -> FeatureVector:
    """Compute the 19-feature characterization of ``m``.

    One pass over the entry arrays builds the row, column and diagonal
    histograms; everything else is O(rows + cols) arithmetic on them.
    """
    coo = m.to_coo()
    n_rows, n_cols, nnz = coo.n_rows, coo.n_cols, coo.nnz

    rd = np.bincount(coo.row, minlength=n_rows).astype(np.float64) \
        if n_rows else np.zeros(0)
    cd = np.bincount(coo.col, minlength=n_cols).astype(np.float64) \
        if n_cols else np.zeros(0)

    if nnz:
        diag_hist = np.bincount(coo.col - coo.row + (n_rows - 1),
                                minlength=n_rows + n_cols - 1)
        n_diags = int(np.count_nonzero(diag_hist))
    else:
        n_diags = 0

    def stats(counts):
        if len(counts) == 0:
            return 0.0, 0.0, 0.0, 0.0
        return (float(counts.mean()), float(counts.max()),
                float(counts.min()), float(counts.std()))

    avg_rd, max_rd, min_rd, std_rd = stats(rd)
    avg_cd, max_cd, min_cd, std_cd = stats(cd)

    diag_fill = nnz / (n_diags * n_cols) if n_diags else 0.0
    col_packed_fill = nnz / (max_rd * n_rows) if max_rd else 0.0
    row_bounce = float(np.abs(np.diff(rd)).mean()) if n_rows > 1 else 0.0
    col_bounce = float(np.abs(np.diff(cd)).mean()) if n_cols > 1 else 0.0
    density = nnz / (n_rows * n_cols) if n_rows and n_cols else 0.0
    row_cv = std_rd / avg_rd if avg_rd else 0.0

    return FeatureVector(
        num_rows=float(n_rows), num_cols=float(n_cols), nnz=float(nnz),
        n_diags=float(n_diags),
        avg_row_nnz=avg_rd, max_row_nnz=max_rd, min_row_nnz=min_rd,
        std_row_nnz=std_rd,
        avg_col_nnz=avg_cd, max_col_nnz=max_cd, min_col_nnz=min_cd,
        std_col_nnz=std_cd,
        diag_fill=diag_fill, col_packed_fill=col_packed_fill,
        row_bounce=row_bounce, col_bounce=col_bounce,
        density=density, row_cv=row_cv, max_row_excess=max_rd - avg_rd,
    )


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min/max learned from training data; maps features to [0, 1]."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if self.mins.shape != (N_FEATURES,) or self.maxs.shape != (N_FEATURES,):
            raise ValueError(f"scaler arrays must have shape ({N_FEATURES},)")
        if np.any(self.mins > self.maxs):
            raise ValueError("per-feature min must not exceed max")

    def transform_array(self, values: np.ndarray) -> np.ndarray:
        """Scale a feature array (last axis = features) into [0, 1], clipping.

        Features that were constant in the training data map to 0.
        """
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        scaled = (np.asarray(values, dtype=np.float64) - self.mins) / safe
        scaled = np.where(span > 0, scaled, 0.0)
        return np.clip(scaled, 0.0, 1.0)


def fit_scaler(samples) -> FeatureScaler:
    """Record per-feature minima and maxima over a nonempty sample set."""
    arrays = [s.as_array() if isinstance(s, FeatureVector) else
              np.asarray(s, dtype=np.float64) for s in samples]
    if not arrays:
        raise ValueError("cannot fit a scaler on an empty sample set")
    stacked = np.vstack(arrays)
    return FeatureScaler(stacked.min(axis=0), stacked.max(axis=0))


def apply_scaler(scaler: FeatureScaler, v: FeatureVector) -> FeatureVector:
    """Normalize one feature vector with clipping to [0, 1]."""
    return FeatureVector.from_array(scaler.transform_array(v.as_array()))
