"""Plain-text matrix files.

Format, all values whitespace-separated decimals at 17 significant digits
(lossless for doubles):

    line 1:   n p           (p = 0 means dense symmetric, no declared rank)
    n lines:  dense symmetric matrix, n values each
    optional: a line reading FACTORED, then U (n lines of p values) and
              R2 (p lines of p values) with dense = U R2 U^T
"""

from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError
from .fixed_rank import PsdFixedRank
from .linalg import symmetrize


@dataclass(frozen=True)
class MatrixFile:
    """Parsed contents: the dense matrix plus the optional factored form."""

    n: int
    p: int
    dense: np.ndarray
    factor: PsdFixedRank | None


def _fmt_row(row):
    return " ".join(f"{v:.17g}" for v in row)


def matrix_file_text(dense=None, factor=None):
    """Serialize a matrix (and optional factored form) to file-format text."""
    if dense is None and factor is None:
        raise FileFormatError("nothing to write: no dense matrix and no factored form")
    if dense is None:
        dense = factor.dense()
    dense = np.asarray(dense, dtype=float)
    n = dense.shape[0]
    p = factor.p if factor is not None else 0
    lines = [f"{n} {p}"]
    lines.extend(_fmt_row(row) for row in dense)
    if factor is not None:
        lines.append("FACTORED")
        lines.extend(_fmt_row(row) for row in factor.basis)
        lines.extend(_fmt_row(row) for row in factor.shape)
    return "\n".join(lines) + "\n"


def write_matrix_file(path, dense=None, factor=None):
    """Write a matrix file; at least one of ``dense`` and ``factor`` is needed."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(matrix_file_text(dense, factor))


def _take_matrix(lines, start, rows, cols, path):
    if start + rows > len(lines):
        raise FileFormatError(f"{path}: truncated file, expected {rows} more rows")
    block = []
    for i in range(rows):
        values = lines[start + i].split()
        if len(values) != cols:
            raise FileFormatError(
                f"{path}: row {start + i + 1} has {len(values)} values, expected {cols}"
            )
        try:
            block.append([float(v) for v in values])
        except ValueError as exc:
            raise FileFormatError(f"{path}: non-numeric value in row {start + i + 1}") from exc
    return np.array(block), start + rows


def read_matrix_file(path):
    """Parse a matrix file into a :class:`MatrixFile`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FileFormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 2:
        raise FileFormatError(f"{path}: first line must be 'n p', got {lines[0]!r}")
    try:
        n, p = int(head[0]), int(head[1])
    except ValueError as exc:
        raise FileFormatError(f"{path}: first line must hold two integers") from exc
    if n < 1 or p < 0 or p > n:
        raise FileFormatError(f"{path}: invalid sizes n={n}, p={p}")
    dense, pos = _take_matrix(lines, 1, n, n, path)
    dense = symmetrize(dense)
    factor = None
    if pos < len(lines) and lines[pos].upper() == "FACTORED":
        if p == 0:
            raise FileFormatError(f"{path}: factored section present but declared rank is 0")
        basis, pos2 = _take_matrix(lines, pos + 1, n, p, path)
        shape, pos2 = _take_matrix(lines, pos2, p, p, path)
        factor = PsdFixedRank(basis, shape)
        if pos2 < len(lines):
            raise FileFormatError(f"{path}: trailing content after the factored section")
    elif pos < len(lines):
        raise FileFormatError(f"{path}: unexpected content at line {pos + 1}")
    return MatrixFile(n=n, p=p, dense=dense, factor=factor)
