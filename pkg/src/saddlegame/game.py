"""Discrete two-player zero-sum Markov games and structural probes.

A game lives on a finite state space with a set of absorbing states. Player 1
(the minimizer) and player 2 (the maximizer) each pick an index into a finite
uniform control grid; the pair selects a transition distribution and a
running cost. Absorbing states pay their terminal cost once.

All arrays are indexed by state position, then player-1 control index, then
player-2 control index. Kernel rows are flattened as ``(x * n1 + i) * n2 + j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12
MIDPOINT_TOL = 1e-12
SEPARABLE_TOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    states: tuple
    absorbing: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "absorbing", frozenset(self.absorbing))

    def __len__(self):
        return len(self.states)

    @cached_property
    def index(self) -> dict:
        return {s: k for k, s in enumerate(self.states)}

    @cached_property
    def absorbing_mask(self) -> np.ndarray:
        return _frozen([s in self.absorbing for s in self.states], dtype=bool)


@dataclass(frozen=True)
class ControlGrid:
    """Uniform grid of ``n_points`` controls on ``[lo, hi]``."""

    lo: float
    hi: float
    n_points: int = 1

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        if not self.lo <= self.hi:
            raise ValueError(f"need lo <= hi, got [{self.lo}, {self.hi}]")
        if self.n_points > 1 and self.lo == self.hi:
            raise ValueError("a grid with several points needs lo < hi")

    @property
    def points(self) -> np.ndarray:
        if self.n_points == 1:
            return np.array([float(self.lo)])
        k = np.arange(self.n_points)
        pts = self.lo + k * (self.hi - self.lo) / (self.n_points - 1)
        pts[-1] = self.hi
        return pts

    def __len__(self):
        return self.n_points


class TransitionKernel:
    """Sparse controlled transition kernel ``p(x, y | r1, r2)``.

    Stored as a CSR matrix with one row per ``(x, i, j)`` triple and one
    column per target state.
    """

    def __init__(self, matrix, n_states: int, n1: int, n2: int):
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape != (n_states * n1 * n2, n_states):
            raise ValueError(
                f"kernel matrix has shape {m.shape}, expected {(n_states * n1 * n2, n_states)}"
            )
        m.sort_indices()
        m.data.setflags(write=False)
        self.matrix = m
        self.n_states = n_states
        self.n1 = n1
        self.n2 = n2

    @classmethod
    def from_dense(cls, p) -> "TransitionKernel":
        p = np.asarray(p, dtype=float)
        s, n1, n2, s2 = p.shape
        if s != s2:
            raise ValueError("dense kernel must have shape (S, n1, n2, S)")
        return cls(sp.csr_matrix(p.reshape(s * n1 * n2, s)), s, n1, n2)

    @classmethod
    def from_rows(cls, rows: Mapping[tuple, Sequence[tuple]], n_states, n1, n2):
        """Build from ``{(x, i, j): [(y, prob), ...]}`` using state positions."""
        r, c, v = [], [], []
        for (x, i, j), dist in rows.items():
            for y, prob in dist:
                r.append((x * n1 + i) * n2 + j)
                c.append(y)
                v.append(prob)
        m = sp.coo_matrix((v, (r, c)), shape=(n_states * n1 * n2, n_states))
        return cls(m.tocsr(), n_states, n1, n2)

    def row(self, x: int, i: int, j: int) -> list:
        k = (x * self.n1 + i) * self.n2 + j
        lo, hi = self.matrix.indptr[k], self.matrix.indptr[k + 1]
        return list(zip(self.matrix.indices[lo:hi].tolist(), self.matrix.data[lo:hi].tolist()))

    def expect(self, values) -> np.ndarray:
        """Expected next-state value for every ``(x, i, j)``: shape (S, n1, n2)."""
        ev = self.matrix @ np.asarray(values, dtype=float)
        return ev.reshape(self.n_states, self.n1, self.n2)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).reshape(self.n_states, self.n1, self.n2)

    def padded(self):
        """Dense padded ``(targets, cumulative probabilities)`` for sampling."""
        m = self.matrix
        counts = np.diff(m.indptr)
        width = max(int(counts.max(initial=0)), 1)
        n_rows = m.shape[0]
        targets = np.zeros((n_rows, width), dtype=np.int64)
        probs = np.zeros((n_rows, width))
        slot = np.arange(m.nnz) - np.repeat(m.indptr[:-1], counts)
        rows = np.repeat(np.arange(n_rows), counts)
        targets[rows, slot] = m.indices
        probs[rows, slot] = m.data
        cum = np.cumsum(probs, axis=1)
        # padding repeats the last real target and the final slot catches
        # draws above a row total that rounds below 1
        last = targets[np.arange(n_rows), np.maximum(counts - 1, 0)]
        pad = np.arange(width)[None, :] >= counts[:, None]
        targets = np.where(pad, last[:, None], targets)
        cum[:, -1] = np.inf
        return targets, cum


@dataclass(frozen=True)
class CostModel:
    running: np.ndarray   # (S, n1, n2)
    terminal: np.ndarray  # (S,)

    def __post_init__(self):
        object.__setattr__(self, "running", _frozen(self.running))
        object.__setattr__(self, "terminal", _frozen(self.terminal))

    @property
    def bound(self) -> float:
        return float(max(np.abs(self.running).max(initial=0.0), np.abs(self.terminal).max(initial=0.0)))


@dataclass(frozen=True)
class StructureTag:
    """Declared control structure: ``general``, ``separable`` or ``bilinear``.

    For ``separable`` the parts ``c1`` (S, n1) and ``c2`` (S, n2) may be given;
    when omitted they are recovered from the running cost and checked.
    ``drift`` optionally carries the bilinear drift coefficients ``b0..b3``
    of a chain built from a diffusion.
    """

    kind: str = "general"
    c1: np.ndarray | None = None
    c2: np.ndarray | None = None
    drift: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("general", "separable", "bilinear"):
            raise ValueError(f"unknown structure kind {self.kind!r}")


@dataclass(frozen=True)
class MarkovGame:
    space: StateSpace
    grids: tuple
    kernel: TransitionKernel
    costs: CostModel
    discount: np.ndarray
    structure: StructureTag = StructureTag()

    def __post_init__(self):
        d = np.asarray(self.discount, dtype=float)
        if d.ndim == 0:
            d = np.full(len(self.space), float(d))
        object.__setattr__(self, "discount", _frozen(d))
        object.__setattr__(self, "grids", tuple(self.grids))

    @property
    def n_states(self) -> int:
        return len(self.space)

    @property
    def shape(self) -> tuple:
        return (self.n_states, len(self.grids[0]), len(self.grids[1]))

    @property
    def absorbing_mask(self) -> np.ndarray:
        return self.space.absorbing_mask


def make_game(
    states: Sequence[Hashable],
    absorbing,
    grids,
    transitions,
    running,
    terminal,
    discount=1.0,
    structure: StructureTag | None = None,
) -> MarkovGame:
    """Convenience constructor taking a dense ``(S, n1, n2, S)`` kernel."""
    space = StateSpace(tuple(states), frozenset(absorbing))
    return MarkovGame(
        space=space,
        grids=tuple(grids),
        kernel=TransitionKernel.from_dense(transitions),
        costs=CostModel(np.asarray(running, dtype=float), np.asarray(terminal, dtype=float)),
        discount=discount,
        structure=structure or StructureTag(),
    )


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    where: tuple | None = None

    def __str__(self):
        loc = "" if self.where is None else f" at {self.where}"
        return f"{self.kind}: {self.message}{loc}"


def separable_parts(table: np.ndarray):
    """Split ``f[..., i, j]`` as ``f1[..., i] + f2[..., j]`` anchored at index 0.

    Returns ``(f1, f2, residual)`` where residual is the worst absolute mismatch.
    """
    t = np.asarray(table, dtype=float)
    f1 = t[..., :, 0]
    f2 = t[..., 0, :] - t[..., :1, 0]
    resid = np.abs(t - (f1[..., :, None] + f2[..., None, :]))
    return f1, f2, float(resid.max(initial=0.0))


def validate_game(game: MarkovGame) -> list[Violation]:
    """Return every well-formedness violation; empty iff the game is well-formed."""
    out: list[Violation] = []
    space = game.space
    if len(space.states) == 0:
        out.append(Violation("states", "state space is empty"))
    if len(set(space.states)) != len(space.states):
        out.append(Violation("states", "state identifiers are not unique"))
    extra = space.absorbing - set(space.states)
    if extra:
        out.append(Violation("absorbing", f"absorbing states not in state space: {sorted(map(str, extra))}"))

    s = len(space.states)
    n1, n2 = len(game.grids[0]), len(game.grids[1])
    k = game.kernel
    if (k.n_states, k.n1, k.n2) != (s, n1, n2):
        out.append(Violation("shape", f"kernel indexed as {(k.n_states, k.n1, k.n2)}, game is {(s, n1, n2)}"))
        return out
    if game.costs.running.shape != (s, n1, n2):
        out.append(Violation("shape", f"running cost has shape {game.costs.running.shape}, expected {(s, n1, n2)}"))
        return out
    if game.costs.terminal.shape != (s,):
        out.append(Violation("shape", f"terminal cost has shape {game.costs.terminal.shape}, expected {(s,)}"))
        return out
    if game.discount.shape != (s,):
        out.append(Violation("shape", f"discount has shape {game.discount.shape}, expected {(s,)}"))
        return out

    data = k.matrix.data
    bad = np.flatnonzero((data < 0) | (data > 1) | ~np.isfinite(data))
    if bad.size:
        rows = np.searchsorted(k.matrix.indptr, bad, side="right") - 1
        for r in np.unique(rows)[:20]:
            x, i, j = (int(v) for v in np.unravel_index(r, (s, n1, n2)))
            out.append(Violation("probability", "entry outside [0, 1]", (space.states[x], i, j)))
    sums = k.row_sums()
    for idx in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)[:20]:
        x, i, j = (int(v) for v in idx)
        out.append(Violation("row_sum", f"distribution sums to {sums[x, i, j]!r}", (space.states[x], i, j)))

    absorbing = space.absorbing_mask
    m = k.matrix
    counts = np.diff(m.indptr).reshape(s, n1, n2)
    first = np.minimum(m.indptr[:-1], max(m.nnz - 1, 0))
    tgt = m.indices[first].reshape(s, n1, n2) if m.nnz else np.full((s, n1, n2), -1)
    val = m.data[first].reshape(s, n1, n2) if m.nnz else np.zeros((s, n1, n2))
    loop_ok = (counts == 1) & (tgt == np.arange(s)[:, None, None]) & (val == 1.0)
    for x in np.flatnonzero(absorbing & ~loop_ok.all(axis=(1, 2))):
        i, j = (int(v) for v in np.argwhere(~loop_ok[x])[0])
        out.append(Violation("absorbing", "absorbing state is not a probability-1 self-loop", (space.states[x], i, j)))

    if not np.all(np.isfinite(game.costs.running)):
        out.append(Violation("cost", "running cost has non-finite entries"))
    if not np.all(np.isfinite(game.costs.terminal)):
        out.append(Violation("cost", "terminal cost has non-finite entries"))

    d = game.discount
    for x in np.flatnonzero(~((d > 0) & (d <= 1))):
        out.append(Violation("discount", f"multiplier {d[x]!r} outside (0, 1]", (space.states[x],)))
    if s and np.all(d == 1.0) and not absorbing.any():
        out.append(Violation("contraction", "no absorbing states and no discount"))

    tag = game.structure
    if tag.kind == "separable":
        running = game.costs.running
        if tag.c1 is not None and tag.c2 is not None:
            resid = float(np.abs(running - (np.asarray(tag.c1)[:, :, None] + np.asarray(tag.c2)[:, None, :])).max(initial=0.0))
        else:
            _, _, resid = separable_parts(running)
        if resid > SEPARABLE_TOL:
            out.append(Violation("structure", f"running cost is not separable (residual {resid:.3g})"))
        kres = _kernel_separable_residual(k)
        if kres > SEPARABLE_TOL:
            out.append(Violation("structure", f"kernel is not separable in the controls (residual {kres:.3g})"))
    elif tag.kind == "bilinear":
        for x in np.flatnonzero(~absorbing):
            rep = probe_convex_concave(game.costs.running[x])
            if not (rep.convex_in_r1 and rep.concave_in_r2):
                out.append(Violation("structure", "running cost is not convex-concave", (space.states[x],)))
                break
    return out


def _kernel_separable_residual(kernel: TransitionKernel) -> float:
    s, n1, n2 = kernel.n_states, kernel.n1, kernel.n2
    base = np.arange(s) * n1 * n2

    def block(i, j):
        return kernel.matrix[base + i * n2 + j]

    anchor = block(0, 0)
    worst = 0.0
    for i in range(n1):
        bi = block(i, 0)
        for j in range(1, n2):
            diff = block(i, j) - bi - block(0, j) + anchor
            if diff.nnz:
                worst = max(worst, float(np.abs(diff.data).max()))
    return worst


@dataclass(frozen=True)
class ProbeReport:
    convex_in_r1: bool
    concave_in_r2: bool
    worst_violation: float


def probe_convex_concave(f) -> ProbeReport:
    """Midpoint test of discrete convexity in r1 and concavity in r2.

    ``f`` is a table on a uniform grid pair, rows indexed by player 1.
    A direction with fewer than three points is accepted vacuously.
    """
    f = np.asarray(f, dtype=float)
    worst = -np.inf
    convex = concave = True
    if f.shape[0] >= 3:
        d = f[1:-1, :] - 0.5 * (f[:-2, :] + f[2:, :])
        worst = max(worst, float(d.max()))
        convex = bool(np.all(d <= MIDPOINT_TOL))
    if f.shape[1] >= 3:
        d = 0.5 * (f[:, :-2] + f[:, 2:]) - f[:, 1:-1]
        worst = max(worst, float(d.max()))
        concave = bool(np.all(d <= MIDPOINT_TOL))
    if worst == -np.inf:
        worst = 0.0
    return ProbeReport(convex, concave, worst)


def check_absorption(game: MarkovGame, horizon: int | None = None) -> float:
    """Worst-case probability of reaching an absorbing state within ``horizon`` steps.

    A positive return certifies the absorption contraction condition at that
    horizon. Defaults to ``|S|`` steps.
    """
    s = game.n_states
    horizon = s if horizon is None else int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    absorbing = game.absorbing_mask
    if not absorbing.any():
        return 0.0
    if absorbing.all():
        return 1.0
    p = absorbing.astype(float)
    for _ in range(horizon):
        nxt = game.kernel.expect(p).min(axis=(1, 2))
        nxt[absorbing] = 1.0
        p = nxt
    return float(np.clip(p[~absorbing].min(), 0.0, 1.0))
