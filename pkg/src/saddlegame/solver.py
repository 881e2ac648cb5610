"""Value iteration for upper, lower and relaxed values of discrete Markov games.

Each Bellman step builds the per-state matrix

    phi(x, i, j) = delta(x) * sum_y p(x, y | i, j) V(y) + c(x, i, j)

and reduces it with the static-game solvers: min-max for the upper value,
max-min for the lower value, the mixed value for the relaxed modes. Absorbing
states are pinned to their terminal cost in every iterate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGame, MaxIterExceeded, MismatchedStateSpaces, NotContractive
from .game import MarkovGame, check_absorption, validate_game
from .static import DEFAULT_TOL, SupportCache, mixed_values

MODES = ("pure_upper", "pure_lower", "relaxed_upper", "relaxed_lower")
DEFAULT_MAX_ITER = 10**6


@dataclass(frozen=True)
class ValueFunction:
    states: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "states", tuple(self.states))

    def __getitem__(self, state):
        return float(self.values[self.states.index(state)])

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.values.tolist()))


@dataclass(frozen=True)
class SolveReport:
    mode: str
    iterations: int
    final_residual: float
    converged: bool
    contraction_certificate: float
    certificate_kind: str
    tol: float


@dataclass(frozen=True)
class FeedbackPolicy:
    """Per-state control distributions for both players.

    Rows of absorbing states are all zero and ``active`` is False there. Pure
    policies are stored as one-hot rows.
    """

    kind: str
    states: tuple
    player1: np.ndarray
    player2: np.ndarray
    active: np.ndarray

    def entries(self) -> dict:
        out = {}
        for x in np.flatnonzero(self.active):
            if self.kind == "pure":
                out[self.states[x]] = (int(self.player1[x].argmax()), int(self.player2[x].argmax()))
            else:
                out[self.states[x]] = (self.player1[x].copy(), self.player2[x].copy())
        return out


@dataclass(frozen=True)
class GapReport:
    rho: float
    argmax_state: object
    per_state_gap: dict


def _values(game: MarkovGame, V) -> np.ndarray:
    v = V.values if isinstance(V, ValueFunction) else V
    v = np.asarray(v, dtype=float)
    if v.shape != (game.n_states,):
        raise ValueError(f"value vector has shape {v.shape}, expected {(game.n_states,)}")
    return v


def bellman_matrices(game: MarkovGame, V) -> np.ndarray:
    """The per-state matrices ``phi`` of shape (S, n1, n2)."""
    v = _values(game, V)
    return game.discount[:, None, None] * game.kernel.expect(v) + game.costs.running


def _pin(game, out):
    mask = game.absorbing_mask
    out[mask] = game.costs.terminal[mask]
    return out


def _upper(game, v):
    phi = bellman_matrices(game, v)
    return _pin(game, phi.max(axis=2).min(axis=1))


def _lower(game, v):
    phi = bellman_matrices(game, v)
    return _pin(game, phi.min(axis=1).max(axis=1))


def _relaxed(game, v, tol, side, cache=None):
    phi = bellman_matrices(game, v)
    live = ~game.absorbing_mask
    out = np.empty(game.n_states)
    if side == "upper":
        vals, *_ = mixed_values(phi[live], tol, cache)
    else:
        vals, *_ = mixed_values(-np.swapaxes(phi[live], 1, 2), tol, cache)
        vals = 0.0 - vals
    out[live] = vals
    return _pin(game, out)


def _wrap(game, v):
    return ValueFunction(game.space.states, v)


def bellman_upper_step(game: MarkovGame, V) -> ValueFunction:
    return _wrap(game, _upper(game, _values(game, V)))


def bellman_lower_step(game: MarkovGame, V) -> ValueFunction:
    return _wrap(game, _lower(game, _values(game, V)))


def bellman_relaxed_step(game: MarkovGame, V, tol: float = DEFAULT_TOL, side: str = "upper") -> ValueFunction:
    """Mixed-value Bellman step.

    The relaxed upper and lower operators coincide; ``side="lower"`` computes
    the same quantity from player 2's side (negated transposed games) and is
    used by the ``relaxed_lower`` solve as an independent route.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    return _wrap(game, _relaxed(game, _values(game, V), tol, side))


def contraction_certificate(game: MarkovGame):
    """``(kind, value)``: the discount modulus if every live state discounts,
    otherwise the absorption probability within ``|S|`` steps."""
    live = ~game.absorbing_mask
    if not live.any():
        return "absorption", 1.0
    dmax = float(game.discount[live].max())
    if dmax < 1.0:
        return "discount", dmax
    gamma = check_absorption(game)
    if gamma <= 0.0:
        raise NotContractive("no discounting and absorption is not certified (gamma = 0)")
    return "absorption", gamma


def solve(
    game: MarkovGame,
    mode: str = "pure_upper",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    V0=None,
):
    """Iterate the selected Bellman operator to a fixed point.

    Stops when the sup-norm change between iterates is at most ``tol``. When
    ``max_iter`` is reached first a :class:`MaxIterExceeded` warning is issued
    and the last iterate is returned with ``converged=False``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    violations = validate_game(game)
    if violations:
        raise InvalidGame(violations)
    kind, cert = contraction_certificate(game)

    v = np.zeros(game.n_states) if V0 is None else _values(game, V0).copy()
    _pin(game, v)
    if mode == "pure_upper":
        step = lambda w: _upper(game, w)  # noqa: E731
    elif mode == "pure_lower":
        step = lambda w: _lower(game, w)  # noqa: E731
    else:
        side = "upper" if mode == "relaxed_upper" else "lower"
        live = int((~game.absorbing_mask).sum())
        n1, n2 = game.shape[1:]
        cache = SupportCache(live, n1, n2) if side == "upper" else SupportCache(live, n2, n1)
        # the per-state matrices must be solved more tightly than the stopping rule
        inner = tol * 1e-3
        step = lambda w: _relaxed(game, w, inner, side, cache)  # noqa: E731

    residual = np.inf
    it = 0
    while it < max_iter:
        nxt = step(v)
        residual = float(np.abs(nxt - v).max(initial=0.0))
        v = nxt
        it += 1
        if residual <= tol:
            break
    converged = residual <= tol
    if not converged:
        warnings.warn(MaxIterExceeded(f"{mode}: residual {residual:.3g} > tol {tol:.3g} after {it} iterations"))
    report = SolveReport(mode, it, residual, converged, cert, kind, tol)
    return _wrap(game, v), report


def saddle_gap(V_plus: ValueFunction, V_minus: ValueFunction) -> GapReport:
    """``rho = max_x (V+(x) - V-(x))`` with per-state gaps."""
    if tuple(V_plus.states) != tuple(V_minus.states):
        raise MismatchedStateSpaces("upper and lower values live on different state spaces")
    gap = V_plus.values - V_minus.values
    if gap.size == 0:
        return GapReport(0.0, None, {})
    k = int(np.argmax(gap))
    return GapReport(float(gap[k]), V_plus.states[k], dict(zip(V_plus.states, gap.tolist())))


def extract_policies(game: MarkovGame, V, mode: str, tol: float = DEFAULT_TOL) -> FeedbackPolicy:
    """Feedback controls read off the Bellman matrices at ``V``.

    Pure upper: player 1 takes the min-max row, player 2 best-responds to it.
    Pure lower: player 2 takes the max-min column, player 1 best-responds.
    Relaxed modes: the mixed strategies of each state's matrix game.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    s, n1, n2 = game.shape
    phi = bellman_matrices(game, V)
    live = ~game.absorbing_mask
    p1 = np.zeros((s, n1))
    p2 = np.zeros((s, n2))
    idx = np.flatnonzero(live)
    if mode == "pure_upper":
        rows = phi[idx].max(axis=2).argmin(axis=1)
        cols = phi[idx, rows, :].argmax(axis=1)
        p1[idx, rows] = 1.0
        p2[idx, cols] = 1.0
        kind = "pure"
    elif mode == "pure_lower":
        cols = phi[idx].min(axis=1).argmax(axis=1)
        rows = phi[idx, :, cols].argmin(axis=1)
        p1[idx, rows] = 1.0
        p2[idx, cols] = 1.0
        kind = "pure"
    else:
        if mode == "relaxed_upper":
            _, a1, a2, _, _ = mixed_values(phi[idx], tol)
        else:
            _, a2, a1, _, _ = mixed_values(-np.swapaxes(phi[idx], 1, 2), tol)
        p1[idx], p2[idx] = a1, a2
        kind = "mixed"
    return FeedbackPolicy(kind, game.space.states, p1, p2, live)
