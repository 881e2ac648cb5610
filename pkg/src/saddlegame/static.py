"""Static two-player zero-sum games on finite action sets.

Entry ``C[i, j]`` is the cost paid by player 1 (rows, minimizer) to player 2
(columns, maximizer). Pure upper/lower values are plain scans; the mixed
value is computed by linear programming, then polished by solving the
equalizing system on the detected supports so the returned certificate is
accurate to roughly machine precision for nondegenerate games.

The batched entry points operate on stacks of matrices ``(B, m, n)`` and are
what the Bellman operators call once per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

DEFAULT_TOL = 1e-9
_SUPPORT_EPS = 1e-9
_NEG_EPS = 1e-12


def as_cost_matrix(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] < 1 or C.shape[1] < 1:
        raise ValueError(f"cost matrix must be a non-empty 2-D table, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    return C


@dataclass(frozen=True)
class Certificate:
    upper_defect: float
    lower_defect: float


@dataclass(frozen=True)
class MixedSolution:
    value: float
    strategy1: np.ndarray
    strategy2: np.ndarray
    certificate: Certificate


def pure_upper(C):
    """``min_i max_j C[i, j]`` with the optimizing row and each row's best column."""
    C = as_cost_matrix(C)
    maxes = C.max(axis=1)
    row = int(np.argmin(maxes))
    return float(maxes[row]), row, [int(j) for j in C.argmax(axis=1)]


def pure_lower(C):
    """``max_j min_i C[i, j]`` with the optimizing column."""
    C = as_cost_matrix(C)
    mins = C.min(axis=0)
    col = int(np.argmax(mins))
    return float(mins[col]), col


def certificate(C, s1, s2):
    """Best-response bounds of a strategy pair.

    Returns ``(value, upper_defect, lower_defect)`` with the value placed at
    the middle of ``[min_i (C s2)_i, max_j (s1' C)_j]``.
    """
    hi = float((np.asarray(s1) @ C).max())
    lo = float((C @ np.asarray(s2)).min())
    v = 0.5 * (hi + lo)
    return v, hi - v, v - lo


def _batch_certificate(C, s1, s2):
    hi = np.einsum("bi,bij->bj", s1, C).max(axis=1)
    lo = np.einsum("bij,bj->bi", C, s2).min(axis=1)
    v = 0.5 * (hi + lo)
    return v, hi - v, v - lo


def _lp_solve(C):
    """Mixed strategies of a single game by linear programming."""
    m, n = C.shape
    shift = C.min()
    scale = max(float(C.max() - shift), 1e-300)
    Cs = (C - shift) / scale
    # min v  s.t.  Cs' s1 <= v,  sum s1 = 1,  s1 >= 0
    c = np.zeros(m + 1)
    c[-1] = 1.0
    A_ub = np.hstack([Cs.T, -np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(
        c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"matrix game LP failed: {res.message}")
    s1 = _normalize(res.x[:m])
    s2 = _normalize(-res.ineqlin.marginals)
    return s1, s2


def _normalize(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    tot = p.sum()
    return p / tot if tot > 0 else np.full(p.shape, 1.0 / p.size)


def _equalize(C, rows, cols):
    """Solve the equalizing systems on square supports.

    ``rows``/``cols`` are ``(B, k)`` index arrays. Returns full-length strategy
    stacks and a mask of items whose solve succeeded with nonnegative weights.
    """
    b, m, n = C.shape
    k = rows.shape[1]
    bi = np.arange(b)[:, None, None]
    sub = C[bi, rows[:, :, None], cols[:, None, :]]
    rhs = np.zeros((b, k + 1))
    rhs[:, -1] = 1.0
    s1 = np.zeros((b, m))
    s2 = np.zeros((b, n))
    ok = np.ones(b, dtype=bool)

    def system(mat):
        M = np.zeros((b, k + 1, k + 1))
        M[:, :k, :k] = mat
        M[:, :k, k] = -1.0
        M[:, k, :k] = 1.0
        return M

    sols = []
    for M in (system(sub), system(np.swapaxes(sub, 1, 2))):
        try:
            x = np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            x = np.full((b, k + 1), np.nan)
            for t in range(b):
                try:
                    x[t] = np.linalg.solve(M[t], rhs[t])
                except np.linalg.LinAlgError:
                    pass
        sols.append(x[:, :k])
    w2, w1 = sols
    ok &= np.all(np.isfinite(w1), axis=1) & np.all(np.isfinite(w2), axis=1)
    ok &= np.all(w1 >= -_NEG_EPS, axis=1) & np.all(w2 >= -_NEG_EPS, axis=1)
    w1 = np.where(ok[:, None], np.clip(w1, 0.0, None), 1.0)
    w2 = np.where(ok[:, None], np.clip(w2, 0.0, None), 1.0)
    np.put_along_axis(s1, rows, w1 / w1.sum(axis=1, keepdims=True), axis=1)
    np.put_along_axis(s2, cols, w2 / w2.sum(axis=1, keepdims=True), axis=1)
    return s1, s2, ok


def _support_indices(mask):
    k = int(mask[0].sum())
    return np.argsort(~mask, axis=1, kind="stable")[:, :k]


class SupportCache:
    """Per-item supports remembered between calls on slowly changing batches."""

    def __init__(self, batch: int, m: int, n: int):
        self.rows = np.zeros((batch, m), dtype=bool)
        self.cols = np.zeros((batch, n), dtype=bool)
        self.valid = np.zeros(batch, dtype=bool)


def _try_supports(C, rows_mask, cols_mask, tol):
    """Equalizer solves grouped by support size. Returns (s1, s2, ok)."""
    b, m, n = C.shape
    s1 = np.zeros((b, m))
    s2 = np.zeros((b, n))
    ok = np.zeros(b, dtype=bool)
    k1 = rows_mask.sum(axis=1)
    k2 = cols_mask.sum(axis=1)
    square = (k1 == k2) & (k1 > 0)
    for k in np.unique(k1[square]):
        idx = np.flatnonzero(square & (k1 == k))
        a1, a2, good = _equalize(C[idx], _support_indices(rows_mask[idx]), _support_indices(cols_mask[idx]))
        _, ud, ld = _batch_certificate(C[idx], a1, a2)
        good &= (ud <= tol) & (ld <= tol)
        s1[idx], s2[idx], ok[idx] = a1, a2, good
    return s1, s2, ok


def _solve_one(C, tol):
    s1, s2 = _lp_solve(C)
    best = (s1, s2, max(certificate(C, s1, s2)[1:]))
    rows = (s1 > _SUPPORT_EPS)[None]
    cols = (s2 > _SUPPORT_EPS)[None]
    p1, p2, ok = _try_supports(C[None], rows, cols, np.inf)
    if ok[0]:
        d = max(certificate(C, p1[0], p2[0])[1:])
        if d < best[2]:
            best = (p1[0], p2[0], d)
    return best


def mixed_values(Cs, tol: float = DEFAULT_TOL, cache: SupportCache | None = None):
    """Mixed values of a stack of games.

    Returns ``(values, strategy1, strategy2, upper_defect, lower_defect)``.
    Items with a pure saddle (or a pure gap within ``tol``) are answered by
    scanning; items whose cached supports still certify are answered by the
    equalizing solve; the rest go through the LP.
    """
    Cs = np.asarray(Cs, dtype=float)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.all(np.isfinite(Cs)):
        raise ValueError("cost matrices have non-finite entries")
    b, m, n = Cs.shape
    s1 = np.zeros((b, m))
    s2 = np.zeros((b, n))

    maxes = Cs.max(axis=2)
    row = maxes.argmin(axis=1)
    up = maxes[np.arange(b), row]
    mins = Cs.min(axis=1)
    col = mins.argmax(axis=1)
    lo = mins[np.arange(b), col]
    done = (up - lo) <= tol
    s1[np.arange(b), row] = np.where(done, 1.0, 0.0)
    s2[np.arange(b), col] = np.where(done, 1.0, 0.0)

    todo = np.flatnonzero(~done)
    if cache is not None and todo.size:
        use = todo[cache.valid[todo]]
        if use.size:
            a1, a2, ok = _try_supports(Cs[use], cache.rows[use], cache.cols[use], tol)
            hit = use[ok]
            s1[hit], s2[hit] = a1[ok], a2[ok]
            done[hit] = True
        todo = np.flatnonzero(~done)
    for t in todo:
        a1, a2, _ = _solve_one(Cs[t], tol)
        s1[t], s2[t] = a1, a2
        if cache is not None:
            cache.rows[t] = a1 > _SUPPORT_EPS
            cache.cols[t] = a2 > _SUPPORT_EPS
            cache.valid[t] = cache.rows[t].sum() == cache.cols[t].sum()

    values, ud, ld = _batch_certificate(Cs, s1, s2)
    return values, s1, s2, ud, ld


def mixed_value(C, tol: float = DEFAULT_TOL) -> MixedSolution:
    """Mixed-strategy value of a single game with its strategy certificate."""
    C = as_cost_matrix(C)
    v, s1, s2, ud, ld = mixed_values(C[None], tol)
    return MixedSolution(float(v[0]), s1[0], s2[0], Certificate(float(ud[0]), float(ld[0])))
