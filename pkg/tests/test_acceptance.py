"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

from saddlegame.harness import h_sweep, simulate_cost
from saddlegame.mca import build_chain, check_local_consistency, spec_from_config
from saddlegame.problems import builtin_examples
from saddlegame.solver import (
    bellman_lower_step,
    bellman_relaxed_step,
    bellman_upper_step,
    extract_policies,
    solve,
)
from saddlegame.static import mixed_value, pure_lower, pure_upper
from gamegen import random_contracting_game, random_separable_game

# solver tolerance for the random games: with discounts up to 0.99 the
# fixed-point error is about tol * 100, far below the 1e-7 criteria
GAME_TOL = 1e-11
H_LIST = (0.2, 0.1, 0.05)
DIFFUSION_BUILTINS = ("separable-1d", "bilinear-2d")


@pytest.fixture(scope="module")
def examples():
    return builtin_examples()


def solve_all(game, modes):
    out = {}
    for m in modes:
        out[m] = solve(game, m, tol=GAME_TOL)[0].values
    return out


@pytest.fixture(scope="module")
def contracting_games():
    rng = np.random.default_rng(20240)
    return [random_contracting_game(rng, max_states=50, max_grid=8, max_discount=0.99) for _ in range(50)]


@pytest.fixture(scope="module")
def separable_games():
    rng = np.random.default_rng(20241)
    return [random_separable_game(rng, max_states=50, max_grid=8, max_discount=0.99) for _ in range(50)]


# values shared between criteria 2, 3 and 4
SOLVED = {"contracting": [], "separable": []}


def test_criterion_1_static_games(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_bound = worst_defect = worst_skew = 0.0
    for _ in range(200):
        n1, n2 = rng.integers(1, 13, size=2)
        C = rng.uniform(-10, 10, (n1, n2))
        s = mixed_value(C)
        worst_bound = max(worst_bound, pure_lower(C)[0] - s.value, s.value - pure_upper(C)[0])
        worst_defect = max(worst_defect, s.certificate.upper_defect, s.certificate.lower_defect)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        M = rng.uniform(-10, 10, (n, n))
        worst_skew = max(worst_skew, abs(mixed_value(M - M.T).value))
    wall = time.perf_counter() - t0
    ok = worst_bound <= 1e-8 and worst_defect <= 1e-8 and worst_skew <= 1e-8 and wall <= 10
    assert report(1, ok, f"bound excess {worst_bound:.2e}, certificate defect {worst_defect:.2e}, "
                         f"skew |value| {worst_skew:.2e} (limit 1e-8), {wall:.1f}s (limit 10s)")


def measured_contraction(game, rng, pairs=3):
    """Largest observed Lipschitz ratio of the operators minus the max discount."""
    live = ~game.absorbing_mask
    dmax = float(game.discount[live].max())
    relaxed = lambda g, v: bellman_relaxed_step(g, v, tol=1e-13)  # noqa: E731
    # the relaxed step solves one matrix game per state, so it gets one pair
    plan = [(bellman_upper_step, pairs), (bellman_lower_step, pairs), (relaxed, 1)]
    worst = -np.inf
    for step, n in plan:
        for _ in range(n):
            V, W = rng.normal(size=game.n_states) * 5, rng.normal(size=game.n_states) * 5
            ratio = np.abs(step(game, V).values - step(game, W).values).max() / np.abs(V - W).max()
            worst = max(worst, ratio - dmax)
    return worst


def test_criterion_2_uniqueness_and_contraction(contracting_games, report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_start, worst_factor = 0.0, -np.inf
    modes = ("pure_upper", "pure_lower", "relaxed_upper")
    for g in contracting_games:
        vals = solve_all(g, modes)
        V0 = rng.normal(size=g.n_states) * 10
        for m in modes:
            other = solve(g, m, tol=GAME_TOL, V0=V0)[0].values
            worst_start = max(worst_start, np.abs(vals[m] - other).max())
        worst_factor = max(worst_factor, measured_contraction(g, rng))
        SOLVED["contracting"].append((g, vals))
    wall = time.perf_counter() - t0
    ok = worst_start <= 1e-7 and worst_factor <= 1e-12 and wall <= 30
    assert report(2, ok, f"{len(contracting_games)} games: start dependence {worst_start:.2e} (limit 1e-7), "
                         f"contraction factor minus max discount {worst_factor:.2e} (limit 1e-12), "
                         f"{wall:.1f}s (limit 30s)")


def test_criterion_3_separable_saddle(separable_games, report):
    t0 = time.perf_counter()
    worst = 0.0
    for g in separable_games:
        vals = solve_all(g, ("pure_upper", "pure_lower", "relaxed_upper"))
        worst = max(worst, float((vals["pure_upper"] - vals["pure_lower"]).max()))
        SOLVED["separable"].append((g, vals))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-7 and wall <= 30
    assert report(3, ok, f"{len(separable_games)} games: max rho {worst:.2e} (limit 1e-7), {wall:.1f}s (limit 30s)")


def test_criterion_4_relaxed_values_agree(examples, report):
    assert SOLVED["contracting"] and SOLVED["separable"], "criteria 2 and 3 must run first"
    t0 = time.perf_counter()
    pennies = examples["pennies-chain"]
    cases = SOLVED["contracting"] + SOLVED["separable"]
    cases.append((pennies, solve_all(pennies, ("pure_upper", "pure_lower", "relaxed_upper"))))
    worst_agree = worst_bracket = 0.0
    for g, vals in cases:
        lower = solve(g, "relaxed_lower", tol=GAME_TOL)[0].values
        up = vals["relaxed_upper"]
        worst_agree = max(worst_agree, np.abs(up - lower).max())
        for v in (up, lower):
            worst_bracket = max(worst_bracket, float((v - vals["pure_upper"]).max()),
                                float((vals["pure_lower"] - v).max()))
    wall = time.perf_counter() - t0
    ok = worst_agree <= 1e-7 and worst_bracket <= 1e-7
    assert report(4, ok, f"{len(cases)} games: relaxed upper/lower gap {worst_agree:.2e}, "
                         f"bracket excess {worst_bracket:.2e} (limits 1e-7), {wall:.1f}s")


def test_criterion_5_pennies_gap_witness(examples, report):
    g = examples["pennies-chain"]
    up = solve(g, "pure_upper")[0]["A"]
    lo = solve(g, "pure_lower")[0]["A"]
    V, _ = solve(g, "relaxed_upper")
    pol = extract_policies(g, V, "relaxed_upper").entries()["A"]
    pol_err = max(float(np.abs(np.asarray(p) - 0.5).max()) for p in pol)
    ok = up == 1.0 and lo == -1.0 and abs(V["A"]) <= 1e-8 and pol_err <= 1e-6
    assert report(5, ok, f"V+(A)={up:g}, V-(A)={lo:g}, relaxed {V['A']:.2e} (limit 1e-8), "
                         f"policy error {pol_err:.2e} (limit 1e-6)")


def hand_case():
    cfg = {
        "dim": 1, "regimes": 1, "domain": {"lo": [-1.0], "hi": [1.0]},
        "controls": {"player1": {"lo": -1, "hi": 1, "n": 3}, "player2": {"lo": -1, "hi": 1, "n": 3}},
        "discount": 1.0, "covariance": 1.0, "drift": {"b3": [1.0]},
        "running_cost": 1.0, "terminal_cost": 0.0,
    }
    ch = build_chain(spec_from_config(cfg), 0.1)
    s = ch.state_index([0.0], 0)
    row = dict(ch.game.kernel.row(s, 0, 0))
    return abs(row[s + 1] - 0.55), abs(row[s - 1] - 0.45), abs(ch.dt[s] - 0.01 / 1.01)


def test_criterion_6_kernel_identities(examples, report):
    t0 = time.perf_counter()
    worst_sum = 0.0
    min_p = np.inf
    for name in DIFFUSION_BUILTINS:
        for h in H_LIST:
            m = build_chain(examples[name], h).game.kernel.matrix
            worst_sum = max(worst_sum, float(np.abs(np.asarray(m.sum(axis=1)).ravel() - 1.0).max()))
            min_p = min(min_p, float(m.data.min()))
    e_up, e_down, e_dt = hand_case()
    wall = time.perf_counter() - t0
    ok = worst_sum <= 1e-12 and min_p >= 0 and max(e_up, e_down, e_dt) <= 1e-15 and wall <= 20
    assert report(6, ok, f"row sum error {worst_sum:.2e} (limit 1e-12), min probability {min_p:.3g}, "
                         f"hand case errors p+ {e_up:.1e} p- {e_down:.1e} dt {e_dt:.1e} (limit 1e-15), "
                         f"{wall:.1f}s (limit 20s)")


def test_criterion_7_local_consistency(examples, report):
    t0 = time.perf_counter()
    ok = True
    parts = []
    for name in DIFFUSION_BUILTINS:
        reps = [check_local_consistency(build_chain(examples[name], h)) for h in H_LIST]
        worst = [max(r.worst_mean_defect, r.worst_regime_defect) for r in reps]
        # the constant is set at the coarsest h and allowed 10% slack
        C = max(reps[0].worst_mean_defect, reps[0].worst_regime_defect) / H_LIST[0] ** 2 * 1.1
        bounded = all(max(r.worst_mean_defect, r.worst_regime_defect) <= C * h * h for r, h in zip(reps, H_LIST))
        ratios = [a / b if b > 0 else np.inf for a, b in zip(worst, worst[1:])]
        ok &= bounded and min(ratios) >= 1.8
        parts.append(f"{name} C={C:.3g} defects {', '.join(f'{w:.2e}' for w in worst)} "
                     f"ratios {', '.join(f'{r:.2f}' for r in ratios)}")
    wall = time.perf_counter() - t0
    ok &= wall <= 30
    assert report(7, ok, "; ".join(parts) + f" (ratio limit 1.8), {wall:.1f}s (limit 30s)")


@pytest.fixture(scope="module")
def sweeps(examples):
    out = {}
    for name in DIFFUSION_BUILTINS:
        t0 = time.perf_counter()
        res = h_sweep(examples[name], H_LIST)
        out[name] = (res, time.perf_counter() - t0)
    return out


def test_criterion_8_fixed_h_saddle(sweeps, report):
    ok = True
    parts = []
    for name, (res, wall) in sweeps.items():
        rhos = [r.rho for r in res.rows]
        ok &= max(rhos) <= 1e-6 and wall <= 120
        sizes = "/".join(str(r.n_states) for r in res.rows)
        parts.append(f"{name} max rho {max(rhos):.2e} states {sizes} {wall:.1f}s")
    assert report(8, ok, "; ".join(parts) + " (limits 1e-6, 120s per sweep)")


def test_criterion_9_successive_differences_shrink(sweeps, report):
    ok = True
    parts = []
    for name, (res, _) in sweeps.items():
        for m in ("pure_upper", "pure_lower", "relaxed_upper", "relaxed_lower"):
            d = res.successive_differences(m)
            # rows are 0.2 -> 0.1 and 0.1 -> 0.05
            ok &= bool(np.all(d[1] < d[0]))
        d = res.successive_differences("relaxed_upper")
        shown = " -> ".join("[" + " ".join(f"{v:.2e}" for v in row) + "]" for row in d)
        parts.append(f"{name} relaxed {shown}")
    assert report(9, ok, "; ".join(parts))


def simulation_case(target, game, start_state, seed):
    V, _ = solve(game, "relaxed_upper")
    pol = extract_policies(game, V, "relaxed_upper")
    runs = [simulate_cost(target, pol, paths=10**5, seed=seed) for _ in range(2)]
    est = runs[0]
    err = abs(est.mean - V.values[start_state])
    return err, est.std_error, runs[0].to_csv() == runs[1].to_csv(), est.truncated


def test_criterion_10_simulation_matches_dp(examples, report):
    t0 = time.perf_counter()
    ok = True
    parts = []
    pennies = examples["pennies-chain"]
    ch = build_chain(examples["separable-1d"], 0.1)
    cases = [
        ("pennies-chain", pennies, pennies, pennies.space.index["A"]),
        ("separable-1d h=0.1", ch, ch.game, ch.state_index([0.0], 0)),
    ]
    for label, target, game, s0 in cases:
        err, se, same, trunc = simulation_case(target, game, s0, seed=7)
        ok &= err <= 3 * (se + 1e-6) and same and trunc == 0
        parts.append(f"{label} |mean-V| {err:.3g} vs 3(se+1e-6) {3 * (se + 1e-6):.3g}, rerun identical {same}")
    wall = time.perf_counter() - t0
    ok &= wall <= 120
    assert report(10, ok, "; ".join(parts) + f", {wall:.1f}s (limit 120s)")
