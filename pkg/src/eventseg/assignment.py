"""Minimum-cost one-to-one assignment (rectangular Kuhn-Munkres).

Rows are predictions, columns are targets. Rectangular inputs are padded to a
square with one finite constant, which adds the same amount to every complete
assignment and so leaves the optimum unchanged.

Among equally cheap optima the solver returns a canonical one: targets are
visited in index order and each takes the lowest prediction index that still
admits an optimal completion. Optimal completions are exactly the perfect
matchings on the zero-reduced-cost edges of the final dual solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    total_cost: float

    @property
    def rows(self) -> np.ndarray:
        return np.array([i for i, _ in self.pairs], dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array([j for _, j in self.pairs], dtype=np.int64)


def _hungarian(c: np.ndarray):
    """Shortest augmenting path Hungarian on a square matrix.

    Returns (row_of_col, u, v) with ``c[i, j] - u[i] - v[j] >= 0`` everywhere
    and equality on the matched edges.
    """
    n = c.shape[0]
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: 1-based row matched to 1-based column j; p[0] is the row being inserted
    way = [0] * (n + 1)
    rows = c.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_of_col = [p[j] - 1 for j in range(1, n + 1)]
    return row_of_col, np.array(u[1:]), np.array(v[1:])


def _perfect_matching(adj, fixed_rows, fixed_cols, n):
    """Kuhn's augmenting-path search on the free part of the tight graph.

    Returns {row: col} for the free vertices, or None if no perfect matching exists.
    """
    match_row = {}  # row -> col among free vertices

    def augment(j, seen):
        for i in adj[j]:
            if i in fixed_rows or i in seen:
                continue
            seen.add(i)
            if i not in match_row or augment(match_row[i], seen):
                match_row[i] = j
                return True
        return False

    for j in range(n):
        if j in fixed_cols:
            continue
        if not augment(j, set()):
            return None
    return match_row


def _canonical(c: np.ndarray, row_of_col, u, v, m: int):
    """Canonical optimum; only the first ``m`` columns (the real targets) get the tie-break."""
    n = c.shape[0]
    scale = max(1.0, float(np.abs(c).max()))
    tol = 1e-9 * scale * n
    reduced = c - u[:, None] - v[None, :]
    tight = reduced <= tol
    adj = [[int(i) for i in np.flatnonzero(tight[:, j])] for j in range(n)]
    if all(len(adj[j]) == 1 for j in range(m)):
        return row_of_col  # every target has a single optimal partner
    fixed_rows: dict[int, int] = {}
    fixed_cols: set[int] = set()
    for j in range(m):
        for i in adj[j]:
            if i in fixed_rows:
                continue
            fixed_rows[i] = j
            fixed_cols.add(j)
            if _perfect_matching(adj, fixed_rows, fixed_cols, n) is not None:
                break
            del fixed_rows[i]
            fixed_cols.discard(j)
        else:
            # tolerance too tight for this column; keep the solver's own choice
            return row_of_col
    rest = _perfect_matching(adj, fixed_rows, fixed_cols, n)
    out = [0] * n
    for i, j in {**fixed_rows, **rest}.items():
        out[j] = i
    return out


def solve(cost) -> Assignment:
    """Minimum-cost matching of rows (predictions) to columns (targets)."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-D, got shape {c.shape}")
    N, M = c.shape
    if M == 0 or N == 0:
        return Assignment((), 0.0)
    if not np.isfinite(c).all():
        raise ValueError("cost matrix has non-finite entries")
    n = max(N, M)
    if N != M:
        pad = n * float(np.abs(c).max()) + 1.0
        sq = np.full((n, n), pad)
        sq[:N, :M] = c
    else:
        sq = c
    row_of_col, u, v = _hungarian(sq)
    # with fewer predictions than targets, padding rows take part in the tie-break too
    row_of_col = _canonical(sq, row_of_col, u, v, M if N >= M else n)
    pairs = sorted((i, j) for j, i in enumerate(row_of_col) if i < N and j < M)
    total = math.fsum(c[i, j] for i, j in pairs)
    return Assignment(tuple(pairs), total)

