"""Deployment API: pick a storage format for a matrix before it enters SpMM.

``spmm_predict`` extracts features, asks the model for a format, converts
when needed and accounts each phase separately, so callers can attribute
selection overhead against kernel time. Per-layer decisions can be cached:
a layer keeps its first decision until the cache entry is invalidated
(layers whose operand density drifts past a threshold should be
re-decided; see :meth:`LayerFormatCache.drifted`).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .features import extract_features
from .formats import DiaBlowupError, SparseMatrix, StorageFormat, convert
from .spmm import spmm

# A cached layer decision should be revisited when operand density moves
# by more than this factor from the density it was decided at.
DENSITY_DRIFT_FACTOR = 2.0


def _density(m: SparseMatrix) -> float:
    cells = m.n_rows * m.n_cols
    return m.nnz / cells if cells else 0.0


@dataclass(frozen=True)
class SelectionOutcome:
    """One format decision: the chosen format, the matrix in it, and timings."""

    chosen_format: StorageFormat
    converted: bool
    feature_time: float
    predict_time: float
    convert_time: float
    matrix: SparseMatrix
    fallback: bool = False
    cache_hit: bool = False


@dataclass(frozen=True)
class OverheadBreakdown:
    """Phase timings of one adaptive multiplication."""

    feature_time: float
    predict_time: float
    convert_time: float
    kernel_time: float
    chosen_format: StorageFormat
    fallback: bool = False
    cache_hit: bool = False

    @property
    def total(self) -> float:
        return (self.feature_time + self.predict_time
                + self.convert_time + self.kernel_time)

    @property
    def overhead_fraction(self) -> float:
        """Share of total time spent deciding (features + prediction)."""
        total = self.total
        return (self.feature_time + self.predict_time) / total if total else 0.0


class LayerFormatCache:
    """Remembers one format decision per layer id (thread-safe updates)."""

    def __init__(self):
        self._entries = {}
        self._lock = threading.Lock()

    def get(self, layer_id):
        """Cached (format, decision density) or None."""
        return self._entries.get(layer_id)

    def put(self, layer_id, chosen_format: StorageFormat, density: float):
        with self._lock:
            self._entries[layer_id] = (chosen_format, density)

    def invalidate(self, layer_id):
        with self._lock:
            self._entries.pop(layer_id, None)

    def drifted(self, layer_id, density: float,
                factor: float = DENSITY_DRIFT_FACTOR) -> bool:
        """True when ``density`` moved past ``factor`` x the decision density."""
        entry = self._entries.get(layer_id)
        if entry is None:
            return False
        _, decided_at = entry
        if decided_at == 0.0:
            return density > 0.0
        ratio = density / decided_at
        return ratio > factor or ratio < 1.0 / factor

    def __len__(self):
        return len(self._entries)


def spmm_predict(model, m: SparseMatrix, layer_id=None,
                 cache: LayerFormatCache = None) -> SelectionOutcome:
    """Return ``m`` stored in the predicted format, with phase timings.

    With a cache and a known ``layer_id`` the stored decision is reused
    and no features are extracted. If converting to the predicted format
    is refused (DIA blowup guard), the input format is kept and the
    outcome is flagged as a fallback.
    """
    cached = cache.get(layer_id) if cache is not None and layer_id is not None \
        else None
    if cached is not None:
        chosen, _ = cached
        feature_time = predict_time = 0.0
        cache_hit = True
    else:
        t0 = time.perf_counter()
        features = extract_features(m)
        feature_time = time.perf_counter() - t0
        t0 = time.perf_counter()
        chosen = model.predict(features)
        predict_time = time.perf_counter() - t0
        cache_hit = False
        if cache is not None and layer_id is not None:
            cache.put(layer_id, chosen, features.density)

    fallback = False
    convert_time = 0.0
    out = m
    if chosen != m.format:
        t0 = time.perf_counter()
        try:
            out = convert(m, chosen)
        except DiaBlowupError:
            out = m
            chosen = m.format
            fallback = True
        convert_time = time.perf_counter() - t0
    return SelectionOutcome(chosen, out.format != m.format or out is not m,
                            feature_time, predict_time, convert_time, out,
                            fallback=fallback, cache_hit=cache_hit)


def adaptive_spmm(model, a: SparseMatrix, x: np.ndarray, layer_id=None,
                  cache: LayerFormatCache = None):
    """Format-select then multiply; returns (product, overhead breakdown)."""
    outcome = spmm_predict(model, a, layer_id, cache)
    result = spmm(outcome.matrix, x)
    breakdown = OverheadBreakdown(outcome.feature_time, outcome.predict_time,
                                  outcome.convert_time, result.elapsed,
                                  outcome.chosen_format,
                                  fallback=outcome.fallback,
                                  cache_hit=outcome.cache_hit)
    return result.product, breakdown
