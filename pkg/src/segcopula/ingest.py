"""Count-matrix I/O and gene filtering.

Matrices are cells-by-genes internally. Parsers are hand-rolled so that
malformed input produces an error naming the offending line.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError


@dataclass
class CountMatrix:
    """Dense nonnegative matrix, rows = cells, columns = genes."""

    values: np.ndarray
    gene_names: list = field(default=None)
    cell_names: list = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError("count matrix must be 2-d")
        n, p = self.values.shape
        if n < 2:
            raise DataError("count matrix needs at least two cells (rows)")
        if p < 1:
            raise DataError("count matrix needs at least one gene (column)")
        if np.any(~np.isfinite(self.values)):
            raise DataError("count matrix contains non-finite entries")
        if np.any(self.values < 0):
            raise DataError("count matrix contains negative entries")
        if self.gene_names is None:
            self.gene_names = [f"g{j + 1}" for j in range(p)]
        if self.cell_names is None:
            self.cell_names = [f"cell{i + 1}" for i in range(n)]
        if len(self.gene_names) != p:
            raise DataError("gene name count does not match column count")
        if len(self.cell_names) != n:
            raise DataError("cell name count does not match row count")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, CountMatrix):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.gene_names == other.gene_names
            and self.cell_names == other.cell_names
        )


# ============================================================
# MatrixMarket (coordinate) reader
# ============================================================


def read_matrix_market(path, genes_are="columns"):
    """Read a coordinate-format MatrixMarket file into a dense CountMatrix.

    genes_are says which axis of the stored matrix is genes; the result is
    always cells x genes. Unspecified coordinates are zero; duplicate
    coordinates accumulate.
    """
    if genes_are not in ("rows", "columns"):
        raise ArgumentError("genes_are must be 'rows' or 'columns'")
    try:
        with open(path, "rt", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None
    if not lines:
        raise DataError(f"{path}: line 1: empty file")

    header = lines[0].split()
    if (
        len(header) != 5
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[2].lower() != "coordinate"
    ):
        raise DataError(f"{path}: line 1: malformed MatrixMarket header")
    if header[3].lower() not in ("real", "integer"):
        raise DataError(f"{path}: line 1: unsupported field type '{header[3]}'")
    if header[4].lower() != "general":
        raise DataError(f"{path}: line 1: unsupported symmetry '{header[4]}'")

    lineno = 1
    dims = None
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw.startswith("%") or not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise DataError(f"{path}: line {lineno}: expected 'rows cols nnz'")
        try:
            nrows, ncols, nnz = (int(x) for x in parts)
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-integer dimensions") from None
        if nrows < 1 or ncols < 1 or nnz < 0:
            raise DataError(f"{path}: line {lineno}: invalid dimensions")
        dims = (nrows, ncols, nnz)
        break
    if dims is None:
        raise DataError(f"{path}: line {lineno}: missing dimensions line")
    nrows, ncols, nnz = dims

    dense = np.zeros((nrows, ncols))
    seen = 0
    start = lineno + 1
    for entry_lineno, raw in enumerate(lines[lineno:], start=start):
        if raw.startswith("%") or not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise DataError(f"{path}: line {entry_lineno}: expected 'row col value'")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[2])
        except ValueError:
            raise DataError(f"{path}: line {entry_lineno}: unparseable entry") from None
        if not (1 <= i <= nrows) or not (1 <= j <= ncols):
            raise DataError(f"{path}: line {entry_lineno}: coordinate out of range")
        if not np.isfinite(v) or v < 0:
            raise DataError(f"{path}: line {entry_lineno}: negative or non-finite value")
        dense[i - 1, j - 1] += v
        seen += 1
    if seen != nnz:
        raise DataError(f"{path}: declared {nnz} entries but found {seen}")

    if genes_are == "rows":
        dense = dense.T
    return CountMatrix(values=dense)


# ============================================================
# CSV reader / writer
# ============================================================


def read_csv(path, has_header=True):
    """Read a rectangular numeric CSV (cells x genes).

    With has_header the first row supplies gene names; otherwise names are
    generated.
    """
    rows = []
    gene_names = None
    try:
        fh = open(path, "rt", encoding="utf-8", newline="")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None
    with fh:
        reader = csv.reader(fh)
        width = None
        for lineno, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if lineno == 1 and has_header:
                gene_names = [c.strip() for c in rec]
                width = len(gene_names)
                continue
            if width is None:
                width = len(rec)
            if len(rec) != width:
                raise DataError(f"{path}: line {lineno}: ragged row "
                                f"({len(rec)} fields, expected {width})")
            try:
                row = [float(c) for c in rec]
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric field") from None
            for v in row:
                if not np.isfinite(v) or v < 0:
                    raise DataError(f"{path}: line {lineno}: negative or non-finite value")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return CountMatrix(values=np.array(rows), gene_names=gene_names)


def write_csv(matrix, path):
    """Write a CountMatrix with a gene-name header. %.17g keeps float64
    values exact on the round trip."""
    with open(path, "wt", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(matrix.gene_names)
        for row in matrix.values:
            writer.writerow([f"{v:.17g}" for v in row])


# ============================================================
# Gene filters
# ============================================================


def filter_genes_by_zero_fraction(matrix, max_zero_frac):
    """Drop genes whose fraction of zero entries exceeds the threshold."""
    if not (0 <= max_zero_frac <= 1):
        raise ArgumentError("max_zero_frac must lie in [0, 1]")
    frac = (matrix.values == 0).mean(axis=0)
    keep = np.nonzero(frac <= max_zero_frac)[0]
    if keep.size == 0:
        raise DataError("zero-fraction filter removed every gene")
    return _take_genes(matrix, keep), keep


def select_top_variable_genes(matrix, n_genes, variance_on="raw"):
    """Keep the n_genes genes with the largest variance.

    Ties broken toward the lower column index; variance_on='log1p' ranks on
    log1p-transformed values instead of raw counts.
    """
    if n_genes < 1:
        raise ArgumentError("n_genes must be at least 1")
    if variance_on not in ("raw", "log1p"):
        raise ArgumentError("variance_on must be 'raw' or 'log1p'")
    vals = np.log1p(matrix.values) if variance_on == "log1p" else matrix.values
    var = vals.var(axis=0, ddof=1)
    n_keep = min(n_genes, matrix.p)
    # stable sort on negated variance keeps ties in index order
    order = np.argsort(-var, kind="stable")[:n_keep]
    keep = np.sort(order)
    return _take_genes(matrix, keep), keep


def _take_genes(matrix, idx):
    return CountMatrix(
        values=matrix.values[:, idx],
        gene_names=[matrix.gene_names[j] for j in idx],
        cell_names=list(matrix.cell_names),
    )
