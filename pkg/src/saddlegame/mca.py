"""Markov chain approximation of regime-switching diffusion games.

The diffusion ``dx = b(x, a, r1, r2) dt + sigma(x, a) dw`` with regime ``a``
driven by a generator ``Q`` is discretized on a uniform lattice of spacing
``h`` over an axis-aligned box, using central differences. For an interior
point ``x`` in regime ``a`` with ``A = sigma sigma'``:

    D      = sum_j a_jj - sum_{j<k} |a_jk| - q_aa h^2 + beta h^2
    D'     = D - beta h^2
    p(x -> x +- h e_j)          = (+- h b_j + a_jj - sum_{k!=j} |a_jk|) / (2 D')
    p(x -> x + h e_j + h e_k)   = p(x -> x - h e_j - h e_k) = a_jk^+ / (2 D')   (j < k)
    p(x -> x + h e_j - h e_k)   = a_jk^- / (2 D')                               (j != k)
    p((x, a) -> (x, l))         = q_al h^2 / D'
    dt(x, a) = h^2 / D

Lattice points on the boundary of the box are absorbing and pay the terminal
cost. The per-step running cost is ``dt * k(x, a, r1, r2)`` and the
continuation value is discounted by ``exp(-beta dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConsistencyViolation, DegenerateDiffusion, HTooLarge
from .families import BilinearDrift, CovarianceField, QuadraticCost, parse_field
from .game import ControlGrid, CostModel, MarkovGame, StateSpace, StructureTag, TransitionKernel

_NEG_CLIP = 1e-13
_DRIFT_RESOLUTION = 1e-8


@dataclass(frozen=True)
class DiffusionGameSpec:
    """Regime-switching controlled diffusion game on a box.

    Callables are vectorized over points ``x`` of shape ``(N, dim)``:

    * ``drift(x, regime, r1, r2) -> (N, dim)``
    * ``covariance(x, regime) -> (N, dim, dim)``
    * ``running_cost(x, regime, r1, r2) -> (N,)``
    * ``terminal_cost(x, regime) -> (N,)``
    """

    dim: int
    n_regimes: int
    lo: tuple
    hi: tuple
    generator: np.ndarray
    discount: float
    controls: tuple
    drift: Callable
    covariance: Callable
    running_cost: Callable
    terminal_cost: Callable
    structure: str = "general"
    name: str = ""
    config: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        q = np.array(self.generator, dtype=float).reshape(self.n_regimes, self.n_regimes)
        q.setflags(write=False)
        object.__setattr__(self, "generator", q)
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "controls", tuple(self.controls))

    def problems(self) -> list:
        """Invariant violations of the spec itself (empty when valid)."""
        out = []
        q = self.generator
        if len(self.lo) != self.dim or len(self.hi) != self.dim:
            out.append("domain bounds do not match dim")
        elif any(a >= b for a, b in zip(self.lo, self.hi)):
            out.append("domain needs lo < hi on every axis")
        if not self.discount > 0:
            out.append("discount beta must be positive")
        if np.any(np.abs(q.sum(axis=1)) > 1e-12):
            out.append("generator rows must sum to 0")
        off = q[~np.eye(self.n_regimes, dtype=bool)]
        if np.any(off < 0):
            out.append("generator off-diagonal rates must be nonnegative")
        if self.structure not in ("general", "separable", "bilinear"):
            out.append(f"unknown structure {self.structure!r}")
        return out


@dataclass(frozen=True)
class Lattice:
    lo: np.ndarray
    h: float
    shape: tuple
    points: np.ndarray   # (N, dim)
    interior: np.ndarray  # (N,) bool

    @property
    def strides(self) -> np.ndarray:
        d = len(self.shape)
        st = np.ones(d, dtype=np.int64)
        for j in range(d - 2, -1, -1):
            st[j] = st[j + 1] * self.shape[j + 1]
        return st

    def nearest(self, x) -> int:
        """Flat index of the lattice point nearest to ``x``."""
        k = np.rint((np.asarray(x, dtype=float) - self.lo) / self.h).astype(np.int64)
        k = np.clip(k, 0, np.asarray(self.shape) - 1)
        return int(k @ self.strides)

    def distance_bound(self) -> float:
        """Upper bound on the covering distance from the box to the lattice."""
        return 0.5 * self.h * math.sqrt(len(self.shape))


def make_lattice(spec: DiffusionGameSpec, h: float) -> Lattice:
    if not h > 0:
        raise ValueError("h must be positive")
    lo = np.asarray(spec.lo)
    hi = np.asarray(spec.hi)
    cells = (hi - lo) / h
    n = np.rint(cells).astype(np.int64)
    if np.any(np.abs(cells - n) > 1e-9 * np.maximum(cells, 1.0)) or np.any(n < 2):
        raise ValueError(f"h={h!r} must divide every box side into at least two cells")
    axes = [lo[j] + h * np.arange(n[j] + 1) for j in range(spec.dim)]
    for j in range(spec.dim):
        axes[j][-1] = hi[j]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    idx = np.stack([g.ravel() for g in np.meshgrid(*[np.arange(k + 1) for k in n], indexing="ij")], axis=-1)
    interior = np.all((idx > 0) & (idx < n), axis=1)
    return Lattice(lo, float(h), tuple(int(k + 1) for k in n), pts, interior)


@dataclass(frozen=True)
class ChainApproximation:
    """Locally consistent discrete game on ``lattice x regimes``.

    State ``s = point * n_regimes + regime``.
    """

    game: MarkovGame
    spec: DiffusionGameSpec
    lattice: Lattice
    h: float
    coords: np.ndarray   # (S, dim)
    regimes: np.ndarray  # (S,)
    points: np.ndarray   # (S,) flat lattice index
    dt: np.ndarray       # (S,)
    denom: np.ndarray    # (S,)

    def state_index(self, x, regime: int) -> int:
        return self.lattice.nearest(x) * self.spec.n_regimes + int(regime)

    @property
    def discount(self) -> np.ndarray:
        return self.game.discount


def _margins(A):
    """Per-axis dominance slack ``a_jj - sum_{k != j} |a_jk|``: (..., dim)."""
    absA = np.abs(A)
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    return diag - (absA.sum(axis=-1) - np.abs(diag))


@dataclass(frozen=True)
class DominanceReport:
    ok: bool
    worst_margin: float
    worst_point: tuple  # (coords, regime, axis)


def _sample_points(spec, lattice):
    if lattice is None:
        n = 21
        axes = [np.linspace(a, b, n) for a, b in zip(spec.lo, spec.hi)]
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    if isinstance(lattice, Lattice):
        return lattice.points
    return np.atleast_2d(np.asarray(lattice, dtype=float))


def diagonal_dominance_check(spec: DiffusionGameSpec, lattice=None) -> DominanceReport:
    """Minimum diagonal-dominance slack over points, regimes and axes."""
    pts = _sample_points(spec, lattice)
    worst = (np.inf, None)
    for a in range(spec.n_regimes):
        A = np.asarray(spec.covariance(pts, a), dtype=float)
        m = _margins(A)
        k = np.unravel_index(int(np.argmin(m)), m.shape)
        if m[k] < worst[0]:
            worst = (float(m[k]), (tuple(pts[k[0]].tolist()), a, int(k[1])))
    return DominanceReport(worst[0] > 0, worst[0], worst[1])


def _drift_bound(spec, pts, regime):
    """``max_r |b_j(x, regime, r)|`` over the control grids: (N, dim)."""
    g1, g2 = spec.controls
    out = np.zeros((pts.shape[0], spec.dim))
    for r1 in g1.points:
        for r2 in g2.points:
            out = np.maximum(out, np.abs(spec.drift(pts, regime, float(r1), float(r2))))
    return out


def max_h_bound(spec: DiffusionGameSpec, lattice_sample=None) -> float:
    """Largest ``h`` keeping every central-difference probability nonnegative."""
    pts = _sample_points(spec, lattice_sample)
    if isinstance(lattice_sample, Lattice):
        pts = pts[lattice_sample.interior]
    best = np.inf
    for a in range(spec.n_regimes):
        m = _margins(np.asarray(spec.covariance(pts, a), dtype=float))
        if np.any(m <= 0):
            k = np.unravel_index(int(np.argmin(m)), m.shape)
            raise DegenerateDiffusion(
                f"diagonal dominance margin {m[k]!r} <= 0 at x={pts[k[0]].tolist()}, regime {a}, axis {k[1]}"
            )
        bmax = _drift_bound(spec, pts, a)
        with np.errstate(divide="ignore", over="ignore"):
            ratio = np.where(bmax > 0, m / np.where(bmax > 0, bmax, 1.0), np.inf)
        best = min(best, float(ratio.min(initial=np.inf)))
    return best


def build_chain(spec: DiffusionGameSpec, h: float) -> ChainApproximation:
    """Central-difference chain on the lattice of spacing ``h``.

    Raises :class:`HTooLarge` when ``h`` exceeds the nonnegativity bound.
    """
    problems = spec.problems()
    if problems:
        raise ValueError("invalid diffusion spec: " + "; ".join(problems))
    lat = make_lattice(spec, h)
    h_max = max_h_bound(spec, lat)
    if h > h_max * (1 + 1e-12):
        raise HTooLarge(h, h_max)

    d, m0 = spec.dim, spec.n_regimes
    g1, g2 = spec.controls
    n1, n2 = len(g1), len(g2)
    npts = lat.points.shape[0]
    S = npts * m0
    strides = lat.strides
    q = spec.generator
    beta = float(spec.discount)
    h2 = h * h

    coords = np.repeat(lat.points, m0, axis=0)
    regimes = np.tile(np.arange(m0), npts)
    point_of = np.repeat(np.arange(npts), m0)
    dt = np.empty(S)
    denom = np.empty(S)
    running = np.zeros((S, n1, n2))
    terminal = np.empty(S)
    rows, cols, vals = [], [], []

    inner = np.flatnonzero(lat.interior)
    boundary = np.flatnonzero(~lat.interior)
    X = lat.points[inner]
    offs_j = np.triu_indices(d, 1)
    for a in range(m0):
        A_all = np.asarray(spec.covariance(lat.points, a), dtype=float)
        Dall = (np.trace(A_all, axis1=1, axis2=2) - np.abs(A_all[:, offs_j[0], offs_j[1]]).sum(axis=1)
                - q[a, a] * h2 + beta * h2)
        sidx = np.arange(npts) * m0 + a
        denom[sidx] = Dall
        dt[sidx] = h2 / Dall
        terminal[sidx] = spec.terminal_cost(lat.points, a)

        A = A_all[inner]
        Dp = Dall[inner] - beta * h2
        marg = _margins(A)
        src = inner * m0 + a

        # control-independent targets: corners and regime switches
        fixed_t, fixed_p = [], []
        for j in range(d):
            for k in range(d):
                if j == k:
                    continue
                ajk = A[:, j, k]
                if j < k:
                    pp = 0.5 * np.clip(ajk, 0, None) / Dp
                    fixed_t += [inner + strides[j] + strides[k], inner - strides[j] - strides[k]]
                    fixed_p += [pp, pp]
                fixed_t.append(inner + strides[j] - strides[k])
                fixed_p.append(0.5 * np.clip(-ajk, 0, None) / Dp)
        fixed_s = []
        for ell in range(m0):
            if ell != a:
                fixed_s.append((inner * m0 + ell, q[a, ell] * h2 / Dp))

        for i, r1 in enumerate(g1.points):
            for jj, r2 in enumerate(g2.points):
                b = np.asarray(spec.drift(X, a, float(r1), float(r2)), dtype=float).reshape(-1, d)
                row = (src * n1 + i) * n2 + jj
                tgt, prb = [], []
                for j in range(d):
                    base = marg[:, j]
                    for sign in (1.0, -1.0):
                        tgt.append((inner + sign * strides[j]).astype(np.int64) * m0 + a)
                        prb.append((sign * h * b[:, j] + base) / (2.0 * Dp))
                tgt += [t * m0 + a for t in fixed_t]
                prb += fixed_p
                tgt += [t for t, _ in fixed_s]
                prb += [p for _, p in fixed_s]
                T = np.stack(tgt, axis=1)
                P = np.stack(prb, axis=1)
                if np.any(P < -_NEG_CLIP):
                    raise HTooLarge(h, h_max)
                P = np.clip(P, 0.0, None)
                keep = P > 0
                rows.append(np.broadcast_to(row[:, None], T.shape)[keep])
                cols.append(T[keep])
                vals.append(P[keep])
                running[src, i, jj] = dt[src] * np.asarray(spec.running_cost(X, a, float(r1), float(r2)), dtype=float)

    absorbing_states = (boundary[:, None] * m0 + np.arange(m0)[None, :]).ravel()
    for i in range(n1):
        for jj in range(n2):
            rows.append((absorbing_states * n1 + i) * n2 + jj)
            cols.append(absorbing_states)
            vals.append(np.ones(absorbing_states.size))
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S * n1 * n2, S)
    )
    labels = tuple((tuple(int(v) for v in np.unravel_index(p, lat.shape)), int(r)) for p, r in zip(point_of, regimes))
    space = StateSpace(labels, frozenset(labels[s] for s in absorbing_states))
    game = MarkovGame(
        space=space,
        grids=(g1, g2),
        kernel=TransitionKernel(mat, S, n1, n2),
        costs=CostModel(running, terminal),
        discount=np.exp(-beta * dt),
        structure=StructureTag(spec.structure),
    )
    for arr in (coords, regimes, point_of, dt, denom):
        arr.setflags(write=False)
    return ChainApproximation(game, spec, lat, float(h), coords, regimes, point_of, dt, denom)


@dataclass(frozen=True)
class ConsistencyReport:
    h: float
    samples: int
    worst_mean_defect: float
    worst_regime_defect: float
    worst_cov_defect: float
    max_step: float
    constant: float
    cov_constant: float
    table: dict = field(repr=False)


def check_local_consistency(chain: ChainApproximation, spec: DiffusionGameSpec | None = None,
                            sample_controls=None, max_constant: float = 100.0) -> ConsistencyReport:
    """Compare the kernel's conditional moments with drift, covariance and rates.

    For every live state and sampled control pair ``(i, j)``:

    * relative mean defect ``|E dxi_k - b_k dt| / (|b_k| dt)`` (components with
      ``b_k != 0``; zero-drift components must have zero mean),
    * covariance defect ``max |cov - A dt| / (h dt)``,
    * relative regime-rate defect ``|p(a -> l) - q_al dt| / (q_al dt)``,
    * the largest jump length.

    ``constant`` is the smallest C with mean and regime defects <= C h^2.
    Raises :class:`ConsistencyViolation` when a constant exceeds ``max_constant``
    or a jump exceeds ``h sqrt(2)``.
    """
    spec = chain.spec if spec is None else spec
    game = chain.game
    S, n1, n2 = game.shape
    d, m0 = spec.dim, spec.n_regimes
    h = chain.h
    g1, g2 = spec.controls
    if sample_controls is None:
        sample_controls = [(i, j) for i in range(n1) for j in range(n2)]
    live = np.flatnonzero(~game.absorbing_mask)
    mat = game.kernel.matrix
    q = spec.generator

    out = {k: [] for k in ("state", "i", "j", "mean", "cov", "regime")}
    worst_mean = worst_reg = worst_cov = max_step = 0.0
    for a in range(m0):
        src = live[chain.regimes[live] == a]
        if src.size == 0:
            continue
        x = chain.coords[src]
        dt = chain.dt[src]
        A = np.asarray(spec.covariance(x, a), dtype=float)
        for i, j in sample_controls:
            rows = (src * n1 + i) * n2 + j
            sub = mat[rows]
            cnt = np.diff(sub.indptr)
            rid = np.repeat(np.arange(src.size), cnt)
            dxi = chain.coords[sub.indices] - x[rid]
            p = sub.data
            mean = np.zeros((src.size, d))
            np.add.at(mean, rid, p[:, None] * dxi)
            second = np.zeros((src.size, d, d))
            np.add.at(second, rid, p[:, None, None] * dxi[:, :, None] * dxi[:, None, :])
            cov = second - mean[:, :, None] * mean[:, None, :]
            step = float(np.sqrt((dxi ** 2).sum(axis=1)).max(initial=0.0))
            max_step = max(max_step, step)

            b = np.asarray(spec.drift(x, a, float(g1.points[i]), float(g2.points[j])), dtype=float).reshape(-1, d)
            bdt = b * dt[:, None]
            # drifts too small to resolve against rounding in the mean are
            # checked in absolute terms instead of relative ones
            nz = np.abs(b) > _DRIFT_RESOLUTION
            off = ~nz & (np.abs(mean - bdt) > 1e-12 * h)
            if np.any(off):
                k = np.argwhere(off)[0]
                raise ConsistencyViolation("mean", (x[k[0]].tolist(), a, i, j), float(abs(mean[k[0], k[1]])))
            rel = np.where(nz, np.abs(mean - bdt) / np.where(nz, np.abs(bdt), 1.0), 0.0).max(axis=1)
            covd = np.abs(cov - A * dt[:, None, None]).max(axis=(1, 2)) / (h * dt)

            reg = np.zeros(src.size)
            tgt_reg = chain.regimes[sub.indices]
            for ell in range(m0):
                if ell == a:
                    continue
                pl = np.zeros(src.size)
                np.add.at(pl, rid, np.where(tgt_reg == ell, p, 0.0))
                if q[a, ell] > 0:
                    reg = np.maximum(reg, np.abs(pl - q[a, ell] * dt) / (q[a, ell] * dt))
                elif np.any(pl > 0):
                    raise ConsistencyViolation("regime", (a, ell), float(pl.max()))
            worst_mean = max(worst_mean, float(rel.max(initial=0.0)))
            worst_reg = max(worst_reg, float(reg.max(initial=0.0)))
            worst_cov = max(worst_cov, float(covd.max(initial=0.0)))
            out["state"].append(src)
            out["i"].append(np.full(src.size, i))
            out["j"].append(np.full(src.size, j))
            out["mean"].append(rel)
            out["cov"].append(covd)
            out["regime"].append(reg)

    table = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in out.items()}
    constant = max(worst_mean, worst_reg) / (h * h)
    report = ConsistencyReport(h, int(table["state"].size), worst_mean, worst_reg, worst_cov, max_step,
                               constant, worst_cov, table)
    if max_step > h * math.sqrt(2) * (1 + 1e-12):
        raise ConsistencyViolation("step", None, max_step)
    if constant > max_constant:
        raise ConsistencyViolation("mean/regime", None, constant)
    if worst_cov > max_constant:
        raise ConsistencyViolation("covariance", None, worst_cov)
    return report


# ---------------------------------------------------------------- config specs

def _per_regime(obj, n, key):
    if isinstance(obj, dict) and "per_regime" in obj:
        items = obj["per_regime"]
        if not isinstance(items, list) or len(items) != n:
            raise ValueError(f"{key}.per_regime: expected a list of {n} entries")
        return items
    return [obj] * n


def _to_grid(obj, key):
    try:
        return ControlGrid(float(obj["lo"]), float(obj["hi"]), int(obj.get("n", obj.get("n_points", 1))))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{key}: {exc}") from None


def spec_from_config(cfg: dict, name: str = "") -> DiffusionGameSpec:
    """Build a spec from analytic coefficient families (see :mod:`families`)."""
    try:
        dim = int(cfg["dim"])
        m0 = int(cfg.get("regimes", 1))
        dom = cfg["domain"]
        lo, hi = list(dom["lo"]), list(dom["hi"])
        ctl = cfg["controls"]
        grids = (_to_grid(ctl["player1"], "controls.player1"), _to_grid(ctl["player2"], "controls.player2"))
        beta = float(cfg["discount"])
    except KeyError as exc:
        raise ValueError(f"diffusion: missing field {exc.args[0]!r}") from None
    Q = np.asarray(cfg.get("generator", [[0.0]]), dtype=float)
    if Q.shape != (m0, m0):
        raise ValueError(f"generator: expected a {m0}x{m0} matrix")
    drifts = [BilinearDrift(dim, t) for t in _per_regime(cfg.get("drift", {}), m0, "drift")]
    covs = [CovarianceField(dim, c) for c in _per_regime(cfg["covariance"], m0, "covariance")]
    costs = [QuadraticCost(dim, c) for c in _per_regime(cfg.get("running_cost", 0.0), m0, "running_cost")]
    terms = [parse_field(g, dim, "terminal_cost") for g in _per_regime(cfg.get("terminal_cost", 0.0), m0, "terminal_cost")]
    structure = cfg.get("structure", "general")
    if structure == "separable":
        if any(dr.has("b0") for dr in drifts) or any(c.has("r1r2") for c in costs):
            raise ValueError("structure: separable specs cannot have r1*r2 drift or cost terms")
    elif structure == "bilinear":
        pass
    elif structure != "general":
        raise ValueError(f"structure: unknown kind {structure!r}")

    def drift(x, a, r1, r2):
        return drifts[a](x, r1, r2)

    def covariance(x, a):
        return covs[a](x)

    def running_cost(x, a, r1, r2):
        return costs[a](x, r1, r2)

    def terminal_cost(x, a):
        return terms[a](x)

    return DiffusionGameSpec(
        dim=dim, n_regimes=m0, lo=lo, hi=hi, generator=Q, discount=beta, controls=grids,
        drift=drift, covariance=covariance, running_cost=running_cost, terminal_cost=terminal_cost,
        structure=structure, name=name, config=cfg,
    )
