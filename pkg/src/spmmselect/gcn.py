"""Minimal two-layer graph convolution driver for exercising format selection.

Each layer computes ``H' = relu(spmm(A, H) @ W)``. The loop measures SpMM
behaviour only: instead of backpropagation, weights receive a seeded
perturbation after every epoch, so adaptive, oracle and static-COO runs
stay numerically identical while their kernel times differ.

Three selection strategies are supported per layer:

- ``static``: keep the adjacency in COO throughout;
- ``adaptive``: predict the format with a trained model, once per layer,
  re-deciding only if operand density drifts past the invalidation factor;
- ``oracle``: exhaustively time every candidate format once per layer and
  keep the fastest.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .features import extract_features
from .formats import (DiaBlowupError, SparseMatrix, StorageFormat, convert,
                      from_triplets)
from .profiling import profile_matrix
from .selector import DENSITY_DRIFT_FACTOR, LayerFormatCache, spmm_predict
from .spmm import spmm

STRATEGIES = ("static", "adaptive", "oracle")


@dataclass
class GcnConfig:
    """Inputs of one demo run; ``adjacency`` may be one matrix or one per layer."""

    adjacency: object
    features: np.ndarray
    layers: int = 2
    hidden_dim: int = 16
    epochs: int = 10
    seed: int = 0
    selection: str = "static"
    model: object = None

    def __post_init__(self):
        if self.selection not in STRATEGIES:
            raise ValueError(f"selection must be one of {STRATEGIES}")
        if self.selection == "adaptive" and self.model is None:
            raise ValueError("adaptive selection needs a trained model")
        for a in self.layer_adjacencies():
            if a.n_rows != a.n_cols:
                raise ValueError("adjacency matrices must be square")
        first = self.layer_adjacencies()[0]
        if self.features.shape[0] != first.n_cols:
            raise ValueError("feature rows must match adjacency columns")

    def layer_adjacencies(self):
        if isinstance(self.adjacency, (list, tuple)):
            if len(self.adjacency) != self.layers:
                raise ValueError("need one adjacency per layer")
            return list(self.adjacency)
        return [self.adjacency] * self.layers


@dataclass
class LayerStep:
    epoch: int
    layer: int
    chosen_format: StorageFormat
    kernel_seconds: float
    density: float


@dataclass
class EpochReport:
    """Per-epoch timings and per-layer decisions of one strategy run."""

    strategy: str
    epoch_seconds: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    output: np.ndarray = None

    @property
    def geomean_epoch_seconds(self) -> float:
        if not self.epoch_seconds:
            return math.nan
        return float(np.exp(np.mean(np.log(self.epoch_seconds))))

    def density_trace(self):
        """(epoch, layer) -> density of the sparse operand actually multiplied."""
        return {(s.epoch, s.layer): s.density for s in self.steps}

    def chosen_formats(self):
        return {(s.epoch, s.layer): s.chosen_format for s in self.steps}


def normalize_adjacency(a: SparseMatrix) -> SparseMatrix:
    """Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2."""
    if a.n_rows != a.n_cols:
        raise ValueError("adjacency must be square")
    coo = a.to_coo()
    n = a.n_rows
    triplets = list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))
    triplets += [(i, i, 1.0) for i in range(n)]
    loops = from_triplets(n, n, triplets).to_coo()
    deg = np.bincount(loops.row, weights=loops.data, minlength=n)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(np.abs(deg)), 0.0)
    vals = loops.data * dinv[loops.row] * dinv[loops.col]
    keep = vals != 0.0
    return from_triplets(n, n, zip(loops.row[keep].tolist(),
                                   loops.col[keep].tolist(),
                                   vals[keep].tolist()))


def init_weights(cfg: GcnConfig):
    """Seeded per-layer dense weights; layer l maps into hidden_dim."""
    rng = np.random.default_rng(cfg.seed)
    dims = [cfg.features.shape[1]] + [cfg.hidden_dim] * cfg.layers
    return [rng.standard_normal((dims[l], dims[l + 1])) * 0.1
            for l in range(cfg.layers)]


class _StrategyState:
    """Per-run selection state: one decision per layer, density tracked."""

    def __init__(self, cfg: GcnConfig):
        self.cfg = cfg
        self.cache = LayerFormatCache()
        self.static_forms = {}
        self.oracle_forms = {}

    def pick(self, layer: int, a: SparseMatrix) -> SparseMatrix:
        mode = self.cfg.selection
        if mode == "static":
            if layer not in self.static_forms:
                self.static_forms[layer] = convert(a, StorageFormat.COO)
            return self.static_forms[layer]
        if mode == "adaptive":
            density = a.nnz / (a.n_rows * a.n_cols) if a.n_rows * a.n_cols else 0.0
            if self.cache.drifted(layer, density, DENSITY_DRIFT_FACTOR):
                self.cache.invalidate(layer)
            return spmm_predict(self.cfg.model, a, layer_id=layer,
                                cache=self.cache).matrix
        # oracle: exhaustively time candidates once per layer
        if layer not in self.oracle_forms:
            self.oracle_forms[layer] = _fastest_format(a)
        fmt = self.oracle_forms[layer]
        try:
            return convert(a, fmt)
        except DiaBlowupError:
            return a

    def chosen(self, layer: int, a: SparseMatrix) -> StorageFormat:
        return self.pick(layer, a).format


def _fastest_format(a: SparseMatrix, reps: int = 3) -> StorageFormat:
    records = profile_matrix(a, dense_cols=min(32, max(1, a.n_cols)),
                             reps=reps, seed=0)
    usable = {f: r for f, r in records.items() if not r.refused}
    return min(usable, key=lambda f: (usable[f].runtime, int(f)))


def _relu(h):
    return np.maximum(h, 0.0)


def _forward_once(cfg, weights, state, epoch, steps):
    adjs = cfg.layer_adjacencies()
    h = cfg.features
    for layer in range(cfg.layers):
        a = state.pick(layer, adjs[layer])
        result = spmm(a, h)
        cells = a.n_rows * a.n_cols
        steps.append(LayerStep(epoch, layer, a.format, result.elapsed,
                               a.nnz / cells if cells else 0.0))
        h = _relu(result.product @ weights[layer])
    return h


def gcn_forward(cfg: GcnConfig, weights=None):
    """One forward pass; returns (output, density trace, layer timings)."""
    weights = init_weights(cfg) if weights is None else weights
    state = _StrategyState(cfg)
    steps = []
    out = _forward_once(cfg, weights, state, 0, steps)
    trace = {(s.epoch, s.layer): s.density for s in steps}
    return out, trace, steps


def run_training_loop(cfg: GcnConfig) -> EpochReport:
    """Run ``cfg.epochs`` forward passes with seeded weight perturbations.

    The perturbation sequence depends only on the seed and epoch index, so
    runs that differ solely in selection strategy produce outputs equal to
    within kernel summation-order noise.
    """
    weights = init_weights(cfg)
    state = _StrategyState(cfg)
    report = EpochReport(strategy=cfg.selection)
    out = None
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        out = _forward_once(cfg, weights, state, epoch, report.steps)
        report.epoch_seconds.append(time.perf_counter() - t0)
        rng = np.random.default_rng((cfg.seed, epoch))
        weights = [w + 0.01 * rng.standard_normal(w.shape) for w in weights]
    report.output = out
    return report


def compare_strategies(cfg: GcnConfig, strategies=STRATEGIES) -> dict:
    """Run the loop once per strategy on identical inputs and seeds."""
    from dataclasses import replace
    reports = {}
    for strategy in strategies:
        run_cfg = replace(cfg, selection=strategy)
        reports[strategy] = run_training_loop(run_cfg)
    return reports


def power_densification(a: SparseMatrix, k: int):
    """Densities of the boolean structure of a, a^2, ..., a^k.

    Structural product only (values ignored); computed densely, intended
    for demo-scale graphs. Nondecreasing whenever the pattern contains the
    identity (self-loops).
    """
    if a.n_rows != a.n_cols:
        raise ValueError("power densification needs a square matrix")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = a.n_rows
    base = (a.to_dense() != 0.0).astype(np.float64)
    cells = n * n
    cur = base
    densities = [float(np.count_nonzero(cur)) / cells if cells else 0.0]
    for _ in range(k - 1):
        cur = ((cur @ base) > 0.0).astype(np.float64)
        densities.append(float(np.count_nonzero(cur)) / cells if cells else 0.0)
    return densities


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def write_epoch_report_csv(path, reports: dict):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "layer", "strategy", "format",
                         "kernel_seconds", "density"))
        for strategy, report in reports.items():
            for s in report.steps:
                writer.writerow([s.epoch, s.layer, strategy,
                                 s.chosen_format.name,
                                 repr(s.kernel_seconds), repr(s.density)])


def write_epoch_report_json(path, reports: dict):
    doc = {}
    for strategy, report in reports.items():
        doc[strategy] = {
            "epoch_seconds": report.epoch_seconds,
            "geomean_epoch_seconds": report.geomean_epoch_seconds,
            "steps": [{"epoch": s.epoch, "layer": s.layer,
                       "format": s.chosen_format.name,
                       "kernel_seconds": s.kernel_seconds,
                       "density": s.density} for s in report.steps],
        }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
