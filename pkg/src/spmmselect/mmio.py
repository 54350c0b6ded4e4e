"""Matrix Market coordinate file reader/writer.

Supports real-valued coordinate files in the ``general`` and ``symmetric``
variants. Symmetric files are expanded to full storage on read. Values are
written with ``repr`` (shortest round-tripping decimal, at most 17
significant digits), so write/read round-trips the entry set exactly.
"""

from __future__ import annotations

from .formats import CooMatrix, SparseMatrix, from_triplets


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def read_matrix_market(path) -> CooMatrix:
    """Read a ``.mtx`` coordinate file into a COO matrix."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket"):
            raise MatrixMarketError("missing %%MatrixMarket header", 1)
        parts = header.strip().split()
        if len(parts) != 5:
            raise MatrixMarketError(f"malformed header {header.strip()!r}", 1)
        _, obj, fmt, field_kind, symmetry = (p.lower() for p in parts)
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError(
                f"unsupported object/format {obj!r}/{fmt!r}; "
                "only coordinate matrices are supported", 1)
        if field_kind != "real":
            raise MatrixMarketError(
                f"unsupported field {field_kind!r}; only real values "
                "are supported", 1)
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(
                f"unsupported symmetry {symmetry!r}; expected general "
                "or symmetric", 1)

        line_no = 1
        size_line = None
        for line in fh:
            line_no += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise MatrixMarketError("missing size line", line_no)
        try:
            n_rows, n_cols, n_entries = (int(tok) for tok in size_line.split())
        except ValueError:
            raise MatrixMarketError(
                f"malformed size line {size_line!r}", line_no) from None
        if n_rows < 0 or n_cols < 0 or n_entries < 0:
            raise MatrixMarketError("negative size declaration", line_no)

        triplets = []
        seen = 0
        for line in fh:
            line_no += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            toks = stripped.split()
            if len(toks) != 3:
                raise MatrixMarketError(
                    f"expected 'row col value', got {stripped!r}", line_no)
            try:
                i = int(toks[0])
                j = int(toks[1])
                v = float(toks[2])
            except ValueError:
                raise MatrixMarketError(
                    f"malformed entry {stripped!r}", line_no) from None
            if not (1 <= i <= n_rows):
                raise MatrixMarketError(
                    f"row index {i} out of declared bounds 1..{n_rows}", line_no)
            if not (1 <= j <= n_cols):
                raise MatrixMarketError(
                    f"column index {j} out of declared bounds 1..{n_cols}", line_no)
            triplets.append((i - 1, j - 1, v))
            if symmetry == "symmetric" and i != j:
                triplets.append((j - 1, i - 1, v))
            seen += 1
        if seen != n_entries:
            raise MatrixMarketError(
                f"declared {n_entries} entries but found {seen}", line_no)

    return from_triplets(n_rows, n_cols, triplets)


def write_matrix_market(m: SparseMatrix, path, comment=None):
    """Write ``m`` as a general real coordinate ``.mtx`` file."""
    coo = m.to_coo()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{coo.n_rows} {coo.n_cols} {coo.nnz}\n")
        for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")
