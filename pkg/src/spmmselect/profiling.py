"""Exhaustive per-format profiling and weighted runtime/memory labeling.

Every candidate format is measured on each matrix: convert, one warm-up
multiplication, then ``reps`` timed runs whose median is recorded together
with the analytic memory footprint. DIA conversions rejected by the blowup
guard become records flagged ``refused`` rather than errors.

Labeling scores each non-refused format with ``w * R + (1 - w) * M`` where
R and M are the runtime and memory min-max normalized over the whole
corpus, keeps every format within a small epsilon of the minimum as
jointly optimal, and breaks ties toward the lowest format code for the
single training label.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES, FeatureVector, extract_features
from .formats import (DiaBlowupError, SparseMatrix, StorageFormat, convert,
                      memory_footprint, projected_dia_footprint)
from .spmm import dense_oracle, spmm

PROFILE_DENSE_COLS = 32
PROFILE_REPS = 5


@dataclass(frozen=True)
class MeasurementRecord:
    """Median runtime and analytic memory for one (matrix, format) pair."""

    format: StorageFormat
    runtime: float
    memory: int
    refused: bool = False


@dataclass(frozen=True)
class ObjectivePolicy:
    """Weight between runtime (w) and memory (1 - w), plus the tie width."""

    w: float = 1.0
    tie_epsilon: float = 1e-4
    normalization: str = "global-minmax"

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if self.tie_epsilon <= 0:
            raise ValueError("tie_epsilon must be positive")
        if self.normalization != "global-minmax":
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class ProfiledMatrix:
    """Features plus the per-format measurements of one matrix."""

    matrix_id: str
    features: FeatureVector
    records: dict


@dataclass(frozen=True)
class LabeledSample:
    matrix_id: str
    features: FeatureVector
    records: dict
    objectives: dict
    best_labels: tuple
    canonical_label: StorageFormat


@dataclass(frozen=True)
class LabeledDataset:
    """Labeled samples plus the corpus-wide ranges the labels were scored in."""

    samples: list
    policy: ObjectivePolicy
    runtime_range: tuple
    memory_range: tuple


def profile_matrix(m: SparseMatrix, dense_cols: int = PROFILE_DENSE_COLS,
                   reps: int = PROFILE_REPS, *, seed: int = 0,
                   verify: bool = False) -> dict:
    """Measure all seven formats on ``m`` against one seeded dense operand.

    Returns a dict with exactly one :class:`MeasurementRecord` per format.
    With ``verify=True`` every product is checked against the dense oracle
    to 1e-9 per element.
    """
    if reps < 3:
        raise ValueError("need at least 3 timed repetitions")
    rng = np.random.default_rng(seed)
    x = rng.random((m.n_cols, dense_cols))
    reference = dense_oracle(m, x) if verify else None
    records = {}
    for fmt in StorageFormat:
        try:
            am = convert(m, fmt)
        except DiaBlowupError:
            records[fmt] = MeasurementRecord(fmt, math.nan,
                                             projected_dia_footprint(m),
                                             refused=True)
            continue
        warm = spmm(am, x)
        if reference is not None:
            err = np.max(np.abs(warm.product - reference)) if reference.size else 0.0
            if err > 1e-9:
                raise RuntimeError(
                    f"{fmt.name} kernel disagrees with the dense oracle "
                    f"by {err:.3e}")
        times = [spmm(am, x).elapsed for _ in range(reps)]
        records[fmt] = MeasurementRecord(fmt, statistics.median(times),
                                         memory_footprint(am))
    return records


def profile_corpus(matrices, dense_cols: int = PROFILE_DENSE_COLS,
                   reps: int = PROFILE_REPS, *, seed: int = 0,
                   verify: bool = False) -> list:
    """Profile an iterable of matrices into :class:`ProfiledMatrix` entries.

    ``matrices`` yields either matrices or (matrix_id, matrix) pairs; bare
    matrices are numbered ``m000``, ``m001``, ...
    """
    profiled = []
    for k, item in enumerate(matrices):
        matrix_id, m = item if isinstance(item, tuple) else (f"m{k:03d}", item)
        records = profile_matrix(m, dense_cols, reps, seed=seed + k,
                                 verify=verify)
        profiled.append(ProfiledMatrix(matrix_id, extract_features(m), records))
    return profiled


def _global_ranges(profiled):
    runtimes, memories = [], []
    for p in profiled:
        for rec in p.records.values():
            if not rec.refused:
                runtimes.append(rec.runtime)
                memories.append(rec.memory)
    return (min(runtimes), max(runtimes)), (min(memories), max(memories))


def _normalize(value, lo, hi):
    return (value - lo) / (hi - lo) if hi > lo else 0.0


def label_samples(profiled, policy: ObjectivePolicy) -> LabeledDataset:
    """Score and label every profiled matrix under ``policy``.

    Normalization ranges are global over all non-refused measurements in
    the corpus (and are returned so deployment-time scoring stays
    consistent). Refused formats never participate in the argmin.
    """
    profiled = list(profiled)
    if len(profiled) < 2:
        raise ValueError("need at least 2 profiled matrices for a "
                         "meaningful global min-max normalization")
    (rmin, rmax), (mmin, mmax) = _global_ranges(profiled)
    samples = []
    for p in profiled:
        objectives = {}
        for fmt, rec in p.records.items():
            if rec.refused:
                continue
            r = _normalize(rec.runtime, rmin, rmax)
            mem = _normalize(rec.memory, mmin, mmax)
            objectives[fmt] = policy.w * r + (1.0 - policy.w) * mem
        if not objectives:
            raise ValueError(f"matrix {p.matrix_id}: all formats refused; "
                             "COO should never refuse")
        best_value = min(objectives.values())
        best = tuple(sorted(f for f, o in objectives.items()
                            if o <= best_value + policy.tie_epsilon))
        samples.append(LabeledSample(p.matrix_id, p.features, p.records,
                                     objectives, best, best[0]))
    return LabeledDataset(samples, policy, (rmin, rmax), (mmin, mmax))


def format_frequency_histogram(profiled, ws, tie_epsilon: float = 1e-4) -> dict:
    """Count, per objective weight, how often each format is jointly optimal.

    Ties are counted once for every tied format, so columns can sum to more
    than the number of matrices.
    """
    histogram = {}
    for w in ws:
        dataset = label_samples(profiled,
                                ObjectivePolicy(w=w, tie_epsilon=tie_epsilon))
        counts = {fmt: 0 for fmt in StorageFormat}
        for sample in dataset.samples:
            for fmt in sample.best_labels:
                counts[fmt] += 1
        histogram[w] = counts
    return histogram


# ---------------------------------------------------------------------------
# CSV schemas
# ---------------------------------------------------------------------------

MEASUREMENT_COLUMNS = ("matrix_id", "format", "runtime_seconds",
                       "memory_bytes", "refused")


def write_measurements_csv(path, profiled):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_COLUMNS)
        for p in profiled:
            for fmt in StorageFormat:
                rec = p.records[fmt]
                writer.writerow([p.matrix_id, fmt.name,
                                 "" if rec.refused else repr(rec.runtime),
                                 rec.memory, int(rec.refused)])


def read_measurements_csv(path) -> dict:
    """Load measurements back into ``{matrix_id: {format: record}}`` (ordered)."""
    out = {}
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MEASUREMENT_COLUMNS:
            raise ValueError(f"unexpected measurements header {header!r}")
        for row in reader:
            matrix_id, fmt_name, runtime, memory, refused = row
            fmt = StorageFormat[fmt_name]
            refused = bool(int(refused))
            rec = MeasurementRecord(fmt,
                                    math.nan if refused else float(runtime),
                                    int(memory), refused)
            out.setdefault(matrix_id, {})[fmt] = rec
    return out


def write_features_csv(path, profiled):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("matrix_id",) + FEATURE_NAMES)
        for p in profiled:
            writer.writerow([p.matrix_id]
                            + [repr(v) for v in p.features.as_array().tolist()])


def read_features_csv(path) -> dict:
    out = {}
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("matrix_id",) + FEATURE_NAMES:
            raise ValueError(f"unexpected features header {header!r}")
        for row in reader:
            out[row[0]] = FeatureVector.from_array([float(v) for v in row[1:]])
    return out


LABELED_FIXED_COLUMNS = ("matrix_id",) + FEATURE_NAMES + (
    "canonical_label", "best_labels")


def labeled_columns():
    return LABELED_FIXED_COLUMNS + tuple(f"objective_{f.name}"
                                         for f in StorageFormat)


def write_labeled_csv(path, dataset: LabeledDataset):
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(labeled_columns())
        for s in dataset.samples:
            row = [s.matrix_id]
            row += [repr(v) for v in s.features.as_array().tolist()]
            row.append(s.canonical_label.name)
            row.append(";".join(f.name for f in s.best_labels))
            for fmt in StorageFormat:
                row.append(repr(s.objectives[fmt]) if fmt in s.objectives else "")
            writer.writerow(row)


def read_labeled_csv(path, policy: ObjectivePolicy = None,
                     runtime_range=(math.nan, math.nan),
                     memory_range=(math.nan, math.nan)) -> LabeledDataset:
    """Load a labeled CSV. Records are not stored in the file, so samples
    come back with empty measurement dicts; policy/ranges default to NaN
    placeholders unless supplied (e.g. from the labeling manifest)."""
    samples = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != labeled_columns():
            raise ValueError(f"unexpected labeled-data header {header!r}")
        n_feat = len(FEATURE_NAMES)
        for row in reader:
            features = FeatureVector.from_array(
                [float(v) for v in row[1:1 + n_feat]])
            canonical = StorageFormat[row[1 + n_feat]]
            best = tuple(StorageFormat[name]
                         for name in row[2 + n_feat].split(";") if name)
            objectives = {}
            for k, fmt in enumerate(StorageFormat):
                cell = row[3 + n_feat + k]
                if cell:
                    objectives[fmt] = float(cell)
            samples.append(LabeledSample(row[0], features, {}, objectives,
                                         best, canonical))
    return LabeledDataset(samples, policy or ObjectivePolicy(),
                          tuple(runtime_range), tuple(memory_range))
