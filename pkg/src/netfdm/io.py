"""File formats: edge lists, holdings tables, dense CSV matrices, manifests.

All numeric output uses locale-independent formatting with 17 significant
digits so round-trips are bit-exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError


def fmt(x) -> str:
    """Format a number with 17 significant digits, '.' decimal separator."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_matrix_csv(path, matrix, header_lines=()):
    """Dense row-major CSV export; optional '#'-prefixed header lines."""
    m = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for row in np.atleast_2d(m):
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_matrix_csv(path):
    """Read a dense CSV matrix written by write_matrix_csv."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if not rows:
        raise ParseError("empty matrix file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError("ragged rows in matrix file")
    return np.asarray(rows, dtype=float)


def parse_edgelist_lines(path):
    """Yield (lineno, fields) for non-comment lines of a TSV edge-list file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped.split("\t")


def write_edgelist(path, edges, weights=None, header_lines=()):
    """Write 1-based `i<TAB>j[<TAB>weight]` records."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for idx, (i, j) in enumerate(edges):
            rec = f"{i + 1}\t{j + 1}"
            if weights is not None:
                rec += f"\t{fmt(weights[idx])}"
            fh.write(rec + "\n")
