"""Quasideterminants over noncommutative entries.

The recursive expansion |A|_ij = a_ij - sum_{p!=i, q!=j} a_iq (|A^ij|_pq)^-1 a_pj
is the authoritative definition; the inverse-matrix oracle flattens the block
matrix, inverts, and inverts the (j, i) block, which is the convention that
matches both the recursion and the commutative determinant-ratio identity.
Indices are 1-based throughout, matching the boxed-entry notation.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .algebra import (
    FormalInverseError,
    NCExpr,
    SingularMatrixError,
    checked_inv,
)


class QuasideterminantError(Exception):
    """Singular inner quasideterminant; carries the minor and position."""

    def __init__(self, message: str, rows=None, cols=None, position=None):
        super().__init__(message)
        self.rows = rows
        self.cols = cols
        self.position = position


def _as_block_array(entries) -> np.ndarray:
    arr = np.asarray(entries, dtype=complex)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis, np.newaxis]
    if arr.ndim != 4 or arr.shape[0] != arr.shape[1] or arr.shape[2] != arr.shape[3]:
        raise ValueError(f"expected square array of square blocks, got shape {arr.shape}")
    return arr


def _is_symbolic(entries) -> bool:
    if isinstance(entries, np.ndarray):
        return False
    try:
        return isinstance(entries[0][0], NCExpr)
    except (TypeError, IndexError, KeyError):
        return False


def quasideterminant(entries, i: int, j: int, cond_limit: float = 1e12):
    """|A|_ij by recursive expansion; entries are d x d blocks or NCExpr.

    For numeric entries every inverse is condition-checked; the error names
    the minor and position that went singular.  For symbolic entries only
    inner quasideterminants that are single atoms can be inverted (formal
    inverses), which covers the 2x2 constructions.
    """
    if _is_symbolic(entries):
        return _qdet_symbolic(entries, i, j)
    arr = _as_block_array(entries)
    n = arr.shape[0]
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"position ({i}, {j}) outside 1..{n}")
    memo: dict[tuple, np.ndarray] = {}
    rows = tuple(range(n))
    cols = tuple(range(n))
    return _qdet_numeric(arr, rows, cols, i - 1, j - 1, cond_limit, memo)


def _qdet_numeric(arr, rows, cols, gi, gj, cond_limit, memo) -> np.ndarray:
    """Quasideterminant of the minor (rows, cols) boxed at global (gi, gj)."""
    key = (rows, cols, gi, gj)
    got = memo.get(key)
    if got is not None:
        return got
    if len(rows) == 1:
        result = arr[rows[0], cols[0]]
        memo[key] = result
        return result
    sub_rows = tuple(r for r in rows if r != gi)
    sub_cols = tuple(c for c in cols if c != gj)
    total = np.array(arr[gi, gj], dtype=complex)
    for q in sub_cols:
        left = arr[gi, q]
        for p in sub_rows:
            inner = _qdet_numeric(arr, sub_rows, sub_cols, p, q, cond_limit, memo)
            try:
                inner_inv = checked_inv(inner, cond_limit)
            except SingularMatrixError as exc:
                raise QuasideterminantError(
                    f"singular inner quasideterminant at minor rows={sub_rows} "
                    f"cols={sub_cols} position=({p + 1}, {q + 1}): {exc}",
                    rows=sub_rows,
                    cols=sub_cols,
                    position=(p + 1, q + 1),
                ) from None
            total = total - left @ inner_inv @ arr[p, gj]
    memo[key] = total
    return total


def _qdet_symbolic(entries, i: int, j: int) -> NCExpr:
    n = len(entries)
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"position ({i}, {j}) outside 1..{n}")
    rows = tuple(range(n))
    cols = tuple(range(n))
    return _qdet_symbolic_rec(entries, rows, cols, i - 1, j - 1)


def _qdet_symbolic_rec(entries, rows, cols, gi, gj) -> NCExpr:
    if len(rows) == 1:
        return entries[rows[0]][cols[0]]
    sub_rows = tuple(r for r in rows if r != gi)
    sub_cols = tuple(c for c in cols if c != gj)
    total = entries[gi][gj]
    for q in sub_cols:
        left = entries[gi][q]
        for p in sub_rows:
            right = entries[p][gj]
            if left.is_zero() or right.is_zero():
                continue
            inner = _qdet_symbolic_rec(entries, sub_rows, sub_cols, p, q)
            try:
                inner_inv = inner.inv()
            except FormalInverseError:
                raise QuasideterminantError(
                    "symbolic inner quasideterminant is not a single invertible "
                    f"atom at minor rows={sub_rows} cols={sub_cols} "
                    f"position=({p + 1}, {q + 1})",
                    rows=sub_rows,
                    cols=sub_cols,
                    position=(p + 1, q + 1),
                ) from None
            total = total - left * inner_inv * right
    return total


def inverse_entry_oracle(entries, i: int, j: int, cond_limit: float = 1e12) -> np.ndarray:
    """|A|_ij as the inverse of a block of the inverted flattened matrix.

    Flattens the n x n array of d x d blocks to nd x nd, inverts, extracts
    the (j, i) block of the inverse and inverts that block.
    """
    arr = _as_block_array(entries)
    n, d = arr.shape[0], arr.shape[2]
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"position ({i}, {j}) outside 1..{n}")
    flat = arr.transpose(0, 2, 1, 3).reshape(n * d, n * d)
    inv_flat = checked_inv(flat, cond_limit)
    block = inv_flat[(j - 1) * d : j * d, (i - 1) * d : i * d]
    return checked_inv(block, cond_limit)


def commutative_reduction_check(entries, i: int, j: int) -> float:
    """|quasideterminant - (-1)^(i+j) det A / det A^ij| for scalar entries."""
    arr = np.asarray(entries, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("commutative check requires a square scalar matrix")
    n = arr.shape[0]
    minor = np.delete(np.delete(arr, i - 1, axis=0), j - 1, axis=1)
    det_minor = np.linalg.det(minor) if n > 1 else 1.0 + 0j
    if abs(det_minor) < 1e-300:
        raise QuasideterminantError(
            f"vanishing minor determinant at position ({i}, {j})"
        )
    ratio = (-1) ** (i + j) * np.linalg.det(arr) / det_minor
    qd = quasideterminant(arr, i, j)
    return float(abs(qd[0, 0] - ratio))


def random_square_array(
    n: int, d: int, rng: np.random.Generator
) -> np.ndarray:
    """Random test array: entries uniform in the complex unit square, then the
    diagonal blocks shifted by 2*I to keep the minors well-conditioned."""
    arr = rng.uniform(0.0, 1.0, size=(n, n, d, d)) + 1j * rng.uniform(
        0.0, 1.0, size=(n, n, d, d)
    )
    for k in range(n):
        arr[k, k] += 2.0 * np.eye(d)
    return arr


def all_positions_report(entries, cond_limit: float = 1e12) -> list[dict]:
    """Every |A|_ij against the oracle; an n x n array yields exactly n^2 values."""
    arr = _as_block_array(entries)
    n = arr.shape[0]
    rows = []
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            qd = quasideterminant(arr, i, j, cond_limit)
            oracle = inverse_entry_oracle(arr, i, j, cond_limit)
            denom = np.linalg.norm(oracle)
            delta = np.linalg.norm(qd - oracle) / (denom if denom > 0 else 1.0)
            rows.append({"i": i, "j": j, "relative_error": float(delta)})
    return rows
