"""Matrix Market and key=value manifest IO.

Sparse matrices are written in coordinate format ("%%MatrixMarket matrix
coordinate real general"), dense matrices in array format, per the NIST
Matrix Market specification. Writes use 16-digit mantissas so float64 values
round-trip losslessly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp


def write_matrix_market(path, m) -> None:
    path = Path(path)
    if sp.issparse(m):
        scipy.io.mmwrite(str(path), sp.coo_matrix(m), field="real", precision=16)
    else:
        a = np.asarray(m, dtype=np.float64)
        scipy.io.mmwrite(str(path), a, field="real", precision=16)


def read_matrix_market(path):
    """Read a Matrix Market file; coordinate files come back as CSC arrays."""
    m = scipy.io.mmread(str(path))
    if sp.issparse(m):
        out = sp.csc_array(m)
        out.sort_indices()
        return out
    return np.ascontiguousarray(np.asarray(m, dtype=np.float64))


def write_manifest(path, mapping: dict) -> None:
    lines = []
    for key, value in mapping.items():
        key = str(key)
        value = str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"manifest key/value not representable: {key!r}")
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {line_no} is not key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_lines(path, items) -> None:
    Path(path).write_text("\n".join(str(x) for x in items) + "\n", encoding="utf-8")


def read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        return []
    return text.splitlines()
