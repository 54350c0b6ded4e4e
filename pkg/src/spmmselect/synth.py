"""Reproducible synthetic sparse matrix generation for training corpora.

Matrices are square and binary (every stored value is 1.0). Sizes cycle
through an arithmetic progression and the target density of each matrix is
drawn log-uniformly, which covers three decades of sparsity without
drowning out the sparse end.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .formats import CooMatrix, coo_from_arrays


@dataclass(frozen=True)
class GenSpec:
    """Corpus recipe: size progression, density range, count and seed."""

    size_min: int = 1000
    size_max: int = 15000
    size_step: int = 200
    sparsity_min: float = 0.001
    sparsity_max: float = 0.70
    total_matrices: int = 300
    seed: int = 7

    def __post_init__(self):
        if self.size_min <= 0 or self.size_min > self.size_max:
            raise ValueError("need 0 < size_min <= size_max")
        if self.size_step <= 0:
            raise ValueError("size_step must be positive")
        if not (0.0 < self.sparsity_min <= self.sparsity_max <= 1.0):
            raise ValueError("need 0 < sparsity_min <= sparsity_max <= 1")
        if self.total_matrices <= 0:
            raise ValueError("total_matrices must be positive")

    @property
    def sizes(self):
        return list(range(self.size_min, self.size_max + 1, self.size_step))

    @classmethod
    def desk_scale(cls, seed: int = 7) -> "GenSpec":
        """CI-friendly corpus: 60 matrices, sizes 200..2000 step 200."""
        return cls(size_min=200, size_max=2000, size_step=200,
                   total_matrices=60, seed=seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "GenSpec":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown GenSpec fields: {sorted(unknown)}")
        return cls(**d)


def _sample_positions(rng, n_cells: int, m: int) -> np.ndarray:
    """Return ``m`` distinct cell indices in [0, n_cells), sorted ascending."""
    if m >= n_cells:
        return np.arange(n_cells, dtype=np.int64)
    if m > 0.25 * n_cells:
        return np.sort(rng.permutation(n_cells)[:m]).astype(np.int64)
    # Sparse case: oversample with replacement, dedupe, top up as needed.
    picked = np.unique(rng.integers(0, n_cells, size=int(m * 1.1) + 16))
    while len(picked) < m:
        extra = rng.integers(0, n_cells, size=m - len(picked) + 16)
        picked = np.unique(np.concatenate([picked, extra]))
    return picked[rng.permutation(len(picked))[:m]] if len(picked) > m \
        else picked


def random_sparse(rng, n_rows: int, n_cols: int, density: float,
                  values: str = "binary") -> CooMatrix:
    """One random matrix with an exact nonzero count of round(density * cells).

    ``values`` selects stored values: ``"binary"`` stores 1.0 everywhere,
    ``"uniform"`` draws from (0, 1).
    """
    n_cells = n_rows * n_cols
    m = max(1, int(round(density * n_cells))) if n_cells else 0
    pos = np.sort(_sample_positions(rng, n_cells, m))
    row = pos // n_cols if n_cols else pos
    col = pos % n_cols if n_cols else pos
    if values == "binary":
        val = np.ones(len(pos))
    elif values == "uniform":
        # Guaranteed nonzero so no entry is dropped.
        val = 1.0 - rng.random(len(pos))
    else:
        raise ValueError(f"unknown value mode {values!r}")
    return coo_from_arrays(n_rows, n_cols, row, col, val)


def generate_matrices(spec: GenSpec):
    """Yield ``spec.total_matrices`` square matrices, deterministically.

    Matrix ``k`` has side ``spec.sizes[k % len(spec.sizes)]`` and a target
    density drawn log-uniformly from the sparsity range. The realized
    nonzero count equals ``round(density * n^2)`` exactly.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = spec.sizes
    lo, hi = np.log(spec.sparsity_min), np.log(spec.sparsity_max)
    for k in range(spec.total_matrices):
        n = sizes[k % len(sizes)]
        density = float(np.exp(rng.uniform(lo, hi)))
        yield random_sparse(rng, n, n, density)
