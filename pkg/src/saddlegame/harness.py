"""Experiment driver: h-sweeps of the chain values and Monte-Carlo cost estimates.

Sweep rows and simulation estimates serialize to CSV with a fixed column
order (see ``schema/csv_schema.md``). Numbers are written with 17 significant
digits so equal results give byte-equal files. Wall time is kept on the row
objects but never written to the deterministic CSVs.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UnreachableAbsorption
from .game import MarkovGame, check_absorption
from .mca import ChainApproximation, DiffusionGameSpec, build_chain
from .problems import builtin_examples
from .solver import DEFAULT_MAX_ITER, MODES, FeedbackPolicy, saddle_gap, solve
from .static import DEFAULT_TOL

TRUNCATION_WARN_FRACTION = 0.01
_CHUNK = 64


def fmt(x) -> str:
    """Canonical number formatting for every CSV the package writes."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def default_probe_points(spec: DiffusionGameSpec) -> list:
    """The box center in every regime."""
    center = tuple(0.5 * (np.asarray(spec.lo) + np.asarray(spec.hi)))
    return [(center, a) for a in range(spec.n_regimes)]


def _check_probes(spec, probes):
    out = []
    lo, hi = np.asarray(spec.lo), np.asarray(spec.hi)
    for x, a in probes:
        x = np.asarray(x, dtype=float)
        if x.shape != (spec.dim,):
            raise ValueError(f"probe point {x.tolist()} has the wrong dimension")
        if not (np.all(x > lo) and np.all(x < hi)):
            raise ValueError(f"probe point {x.tolist()} is not strictly inside the domain")
        if not 0 <= int(a) < spec.n_regimes:
            raise ValueError(f"probe regime {a} out of range")
        out.append((tuple(x.tolist()), int(a)))
    return out


@dataclass(frozen=True)
class SweepRow:
    h: float
    n_states: int
    values: dict        # mode -> (n_probes,) values at the nearest lattice points
    rho: float
    iterations: dict    # mode -> int
    diffs: dict         # mode -> |V^{previous h} - V^{h}| per probe, NaN on the first row
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class SweepResult:
    modes: tuple
    probe_points: tuple
    rows: tuple

    def column_names(self) -> list:
        cols = ["h", "n_states"]
        for m in self.modes:
            cols += [f"value_{m}_p{k}" for k in range(len(self.probe_points))]
        cols.append("rho")
        cols += [f"iterations_{m}" for m in self.modes]
        for m in self.modes:
            cols += [f"diff_{m}_p{k}" for k in range(len(self.probe_points))]
        return cols

    def table(self) -> list:
        out = []
        for r in self.rows:
            line = [r.h, r.n_states]
            for m in self.modes:
                line += list(r.values[m])
            line.append(r.rho)
            line += [r.iterations[m] for m in self.modes]
            for m in self.modes:
                line += list(r.diffs[m])
            out.append(line)
        return out

    def to_csv(self) -> str:
        return _csv_text(self.column_names(), self.table())

    def probes_csv(self) -> str:
        rows = []
        for k, (x, a) in enumerate(self.probe_points):
            rows.append([f"p{k}", a] + list(x))
        dim = len(self.probe_points[0][0]) if self.probe_points else 0
        return _csv_text(["probe", "regime"] + [f"x{j}" for j in range(dim)], rows)

    def plot_data_csv(self) -> str:
        """Long-format data for log-log plots of values and successive differences."""
        rows = []
        for m in self.modes:
            for k in range(len(self.probe_points)):
                for r in self.rows:
                    d = r.diffs[m][k]
                    logd = math.log10(d) if d > 0 and math.isfinite(d) else float("nan")
                    rows.append([m, f"p{k}", r.h, math.log10(r.h), r.values[m][k], d, logd])
        return _csv_text(["mode", "probe", "h", "log10_h", "value", "abs_diff", "log10_abs_diff"], rows)

    def successive_differences(self, mode: str) -> np.ndarray:
        """``(rows - 1, probes)`` array of |V^{h_k} - V^{h_{k+1}}|."""
        return np.array([r.diffs[mode] for r in self.rows[1:]])


def _sweep_one(spec, h, probes, modes, tol, max_iter):
    t0 = time.perf_counter()
    chain = build_chain(spec, h)
    idx = [chain.state_index(x, a) for x, a in probes]
    values, iters, full = {}, {}, {}
    for m in modes:
        V, rep = solve(chain.game, m, tol=tol, max_iter=max_iter)
        full[m] = V
        values[m] = V.values[idx].copy()
        iters[m] = rep.iterations
    rho = saddle_gap(full["pure_upper"], full["pure_lower"]).rho
    return chain.game.n_states, values, rho, iters, time.perf_counter() - t0


def h_sweep(
    spec: DiffusionGameSpec,
    h_list,
    probe_points=None,
    modes=MODES,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int = 1,
) -> SweepResult:
    """Build and solve the chain for each ``h`` and collect probe values.

    Both pure modes are always solved because the gap needs them. Rows are
    ordered by decreasing ``h`` whatever the input order.
    """
    hs = sorted((float(h) for h in h_list), reverse=True)
    if not hs:
        raise ValueError("h_list is empty")
    if any(not h > 0 for h in hs):
        raise ValueError("every h must be positive")
    if len(set(hs)) != len(hs):
        raise ValueError("h_list has repeated values")
    bad = set(modes) - set(MODES)
    if bad:
        raise ValueError(f"unknown modes {sorted(bad)}")
    modes = tuple(m for m in MODES if m in set(modes) | {"pure_upper", "pure_lower"})
    probes = _check_probes(spec, default_probe_points(spec) if probe_points is None else probe_points)

    def work(h):
        return _sweep_one(spec, h, probes, modes, tol, max_iter)

    if workers > 1 and len(hs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            raw = list(ex.map(work, hs))
    else:
        raw = [work(h) for h in hs]

    rows = []
    prev = None
    for h, (n, values, rho, iters, wall) in zip(hs, raw):
        for m in modes:
            if not np.all(np.isfinite(values[m])):
                raise FloatingPointError(f"non-finite values at h={h}")
        diffs = {m: (np.abs(prev[m] - values[m]) if prev else np.full(len(probes), np.nan)) for m in modes}
        rows.append(SweepRow(h, n, values, rho, iters, diffs, wall))
        prev = values
    return SweepResult(modes, tuple(probes), tuple(rows))


@dataclass(frozen=True)
class SimulationEstimate:
    """Mean discounted exit-time cost over simulated paths.

    Each path pays ``sum_n (prod_{k<n} delta_k) c_n + (prod_{k<N} delta_k) g``
    where ``N`` is the absorption step. On a diffusion chain this is
    ``sum_n exp(-beta t_n) dt_n k(...) + exp(-beta t_N) g``.
    """

    mean: float
    std_error: float
    paths: int
    seed: int
    start: object
    max_steps: int
    truncated: int
    definition: str = "discounted exit-time cost"

    @property
    def truncation_fraction(self) -> float:
        return self.truncated / self.paths

    @staticmethod
    def column_names() -> list:
        return ["start", "paths", "seed", "max_steps", "mean", "std_error", "truncated", "truncation_fraction"]

    def to_csv(self) -> str:
        row = [str(self.start), self.paths, self.seed, self.max_steps, self.mean, self.std_error,
               self.truncated, self.truncation_fraction]
        return _csv_text(self.column_names(), [row])


def default_max_steps(target) -> int:
    """20 discount time constants on chains; 20 contraction lengths otherwise."""
    if isinstance(target, ChainApproximation):
        beta = float(target.spec.discount)
        live = ~target.game.absorbing_mask
        if beta > 0 and live.any():
            return int(math.ceil(20.0 / (beta * float(target.dt[live].min()))))
        target = target.game
    game = target
    live = ~game.absorbing_mask
    if not live.any():
        return 1
    dmax = float(game.discount[live].max())
    if dmax < 1.0:
        return int(math.ceil(20.0 / (1.0 - dmax)))
    gamma = check_absorption(game)
    if gamma <= 0:
        raise ValueError("absorption is not certified; pass max_steps explicitly")
    return game.n_states * int(math.ceil(20.0 / gamma))


def _resolve_start(target, start):
    if isinstance(target, ChainApproximation):
        game = target.game
        if start is None:
            center = 0.5 * (np.asarray(target.spec.lo) + np.asarray(target.spec.hi))
            return target.state_index(center, 0), game
        if isinstance(start, (int, np.integer)):
            return int(start), game
        x, a = start
        return target.state_index(x, a), game
    game = target
    if start is None:
        live = np.flatnonzero(~game.absorbing_mask)
        return (int(live[0]) if live.size else 0), game
    if isinstance(start, (int, np.integer)) and start not in game.space.index:
        return int(start), game
    return game.space.index[start], game


def _path_generator(seed: int, path: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, path): path i draws the same
    # numbers no matter how paths are split across workers
    return np.random.Generator(np.random.Philox(key=[path, seed]))


def _sample(cum_rows, u):
    k = (u[:, None] >= cum_rows).sum(axis=1)
    return np.minimum(k, cum_rows.shape[1] - 1)


def _simulate_block(game, arrays, start, first, count, seed, max_steps):
    targets, cum, c1, c2 = arrays
    n1, n2 = game.shape[1:]
    running = game.costs.running.reshape(-1)
    terminal = game.costs.terminal
    delta = game.discount
    absorbing = game.absorbing_mask

    gens = [_path_generator(seed, first + p) for p in range(count)]
    state = np.full(count, start, dtype=np.int64)
    weight = np.ones(count)
    cost = np.zeros(count)
    alive = np.flatnonzero(~absorbing[state])
    done = np.flatnonzero(absorbing[state])
    cost[done] += terminal[state[done]]
    buf = np.zeros((count, _CHUNK, 3))
    step = 0
    while alive.size and step < max_steps:
        slot = step % _CHUNK
        if slot == 0:
            for p in alive:
                buf[p] = gens[p].random((_CHUNK, 3))
        u = buf[alive, slot]
        s = state[alive]
        i = _sample(c1[s], u[:, 0])
        j = _sample(c2[s], u[:, 1])
        row = (s * n1 + i) * n2 + j
        cost[alive] += weight[alive] * running[row]
        weight[alive] *= delta[s]
        y = targets[row, _sample(cum[row], u[:, 2])]
        state[alive] = y
        hit = absorbing[y]
        ended = alive[hit]
        cost[ended] += weight[ended] * terminal[y[hit]]
        alive = alive[~hit]
        step += 1
    return cost, alive.size


def simulate_cost(
    target,
    policy1: FeedbackPolicy,
    policy2: FeedbackPolicy | None = None,
    paths: int = 10**5,
    max_steps: int | None = None,
    seed: int = 0,
    start=None,
    workers: int = 1,
    block: int = 4096,
) -> SimulationEstimate:
    """Monte-Carlo estimate of the cost of a policy pair from ``start``.

    ``target`` is a :class:`ChainApproximation` or a :class:`MarkovGame`.
    Player 1 follows ``policy1.player1`` and player 2 follows
    ``(policy2 or policy1).player2``; mixed entries are sampled each step.
    ``start`` defaults to the box center in regime 0 for chains and to the
    first non-absorbing state otherwise. Paths still running after
    ``max_steps`` are truncated and counted; above 1% an
    :class:`UnreachableAbsorption` warning is issued.
    """
    if int(paths) < 1:
        raise ValueError("paths must be >= 1")
    paths = int(paths)
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    policy2 = policy1 if policy2 is None else policy2
    s0, game = _resolve_start(target, start)
    if not 0 <= s0 < game.n_states:
        raise ValueError(f"start state {s0} out of range")
    if max_steps is None:
        max_steps = default_max_steps(target)
    if int(max_steps) < 1:
        raise ValueError("max_steps must be >= 1")
    max_steps = int(max_steps)

    s, n1, n2 = game.shape
    p1 = np.asarray(policy1.player1, dtype=float)
    p2 = np.asarray(policy2.player2, dtype=float)
    if p1.shape != (s, n1) or p2.shape != (s, n2):
        raise ValueError("policy shapes do not match the game")
    live = ~game.absorbing_mask
    for name, p in (("policy1", p1), ("policy2", p2)):
        if np.any(np.abs(p[live].sum(axis=1) - 1.0) > 1e-9) or np.any(p < 0):
            raise ValueError(f"{name} is not a distribution on every non-absorbing state")

    def cumulative(p):
        c = np.cumsum(p, axis=1)
        c[:, -1] = np.inf
        return c

    targets, cum = game.kernel.padded()
    arrays = (targets, cum, cumulative(p1), cumulative(p2))
    starts = list(range(0, paths, block))

    def work(first):
        return _simulate_block(game, arrays, s0, first, min(block, paths - first), seed, max_steps)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(f) for f in starts]
    costs = np.concatenate([c for c, _ in parts])
    truncated = int(sum(t for _, t in parts))
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    if truncated > TRUNCATION_WARN_FRACTION * paths:
        warnings.warn(UnreachableAbsorption(
            f"{truncated} of {paths} paths did not absorb within {max_steps} steps"))
    label = game.space.states[s0]
    return SimulationEstimate(mean, se, paths, seed, label, max_steps, truncated)


__all__ = [
    "SweepRow", "SweepResult", "SimulationEstimate", "h_sweep", "simulate_cost",
    "builtin_examples", "default_probe_points", "default_max_steps", "fmt", "MarkovGame",
]
