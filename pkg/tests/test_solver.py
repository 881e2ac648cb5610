import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlegame.errors import InvalidGame, MaxIterExceeded, MismatchedStateSpaces, NotContractive
from saddlegame.game import ControlGrid, StructureTag, make_game, probe_convex_concave
from saddlegame.solver import (
    MODES,
    ValueFunction,
    bellman_lower_step,
    bellman_relaxed_step,
    bellman_upper_step,
    extract_policies,
    saddle_gap,
    solve,
)
from gamegen import grids, random_contracting_game, random_separable_game

PENNIES = np.array([[1.0, -1.0], [-1.0, 1.0]])


def one_step(cost, grid=None, g_b=0.0):
    """State A moves to absorbing B with probability 1 and pays ``cost``."""
    cost = np.asarray(cost, dtype=float)
    n1, n2 = cost.shape
    P = np.zeros((2, n1, n2, 2))
    P[:, :, :, 1] = 1.0
    c = np.zeros((2, n1, n2))
    c[0] = cost
    gr = grid or grids(n1, n2)
    return make_game(["A", "B"], ["B"], gr, P, c, np.array([0.0, g_b]), 1.0)


def quad_game():
    r = np.linspace(-1, 1, 5)
    return one_step(r[:, None] ** 2 - r[None, :] ** 2)


def test_bellman_step_examples():
    zero = np.zeros(2)
    assert bellman_upper_step(quad_game(), zero)["A"] == 0.0
    assert bellman_upper_step(one_step(PENNIES), zero)["A"] == 1.0
    assert bellman_lower_step(one_step(PENNIES), zero)["A"] == -1.0
    assert bellman_lower_step(quad_game(), zero)["A"] == 0.0
    assert abs(bellman_relaxed_step(one_step(PENNIES), zero)["A"]) <= 1e-12
    assert bellman_relaxed_step(one_step([[0, 1], [2, 3]]), zero)["A"] == pytest.approx(1.0, abs=1e-12)
    g0 = one_step(np.zeros((2, 2)))
    for step in (bellman_upper_step, bellman_lower_step, bellman_relaxed_step):
        assert np.all(step(g0, zero).values == 0.0)


def test_relaxed_step_equals_pure_steps_on_separable_costs():
    g = quad_game()
    v = np.zeros(2)
    up, lo = bellman_upper_step(g, v)["A"], bellman_lower_step(g, v)["A"]
    assert up == lo
    assert bellman_relaxed_step(g, v)["A"] == pytest.approx(up, abs=1e-12)
    assert bellman_relaxed_step(g, v, side="lower")["A"] == pytest.approx(up, abs=1e-12)


def test_solve_pennies():
    g = one_step(PENNIES)
    V, rep = solve(g, "pure_upper")
    assert V["A"] == 1.0 and V["B"] == 0.0
    # one effective application, one more to observe a zero residual
    assert rep.iterations <= 2 and rep.converged
    assert abs(solve(g, "relaxed_upper")[0]["A"]) <= 1e-12
    assert abs(solve(g, "relaxed_lower")[0]["A"]) <= 1e-12
    assert solve(g, "pure_lower")[0]["A"] == -1.0


def test_zero_costs_give_zero_values_in_all_modes():
    g = random_contracting_game(np.random.default_rng(5), max_states=10, max_grid=3)
    zero = make_game(g.space.states, g.space.absorbing, g.grids,
                     g.kernel.matrix.toarray().reshape(g.shape + (g.n_states,)),
                     np.zeros(g.shape), np.zeros(g.n_states), g.discount)
    for m in MODES:
        assert np.all(solve(zero, m)[0].values == 0.0)


def test_saddle_gap_examples():
    g = one_step(PENNIES)
    gap = saddle_gap(solve(g, "pure_upper")[0], solve(g, "pure_lower")[0])
    assert gap.rho == 2.0 and gap.argmax_state == "A"
    sep = quad_game()
    assert saddle_gap(solve(sep, "pure_upper")[0], solve(sep, "pure_lower")[0]).rho <= 2e-9
    V = ValueFunction(("x", "y"), [1.0, 2.0])
    assert saddle_gap(V, V).rho == 0.0
    with pytest.raises(MismatchedStateSpaces):
        saddle_gap(V, ValueFunction(("x", "z"), [1.0, 2.0]))


def test_policy_examples():
    g = one_step(PENNIES)
    V, _ = solve(g, "relaxed_upper")
    pol = extract_policies(g, V, "relaxed_upper")
    mu1, mu2 = pol.entries()["A"]
    assert np.allclose(mu1, 0.5, atol=1e-12) and np.allclose(mu2, 0.5, atol=1e-12)
    assert "B" not in pol.entries()
    sep = quad_game()
    V, _ = solve(sep, "pure_upper")
    pol = extract_policies(sep, V, "pure_upper")
    i, j = pol.entries()["A"]
    assert sep.grids[0].points[i] == 0.0 and sep.grids[1].points[j] == 0.0


def test_invalid_and_noncontractive_games():
    P = np.zeros((2, 1, 1, 2))
    P[0, 0, 0] = [0.5, 0.4]
    P[1, 0, 0, 1] = 1.0
    bad = make_game(["A", "B"], ["B"], grids(1, 1), P, np.zeros((2, 1, 1)), np.zeros(2), 1.0)
    with pytest.raises(InvalidGame):
        solve(bad)
    P = np.zeros((2, 2, 1, 2))
    P[0, 0, 0, 0] = 1.0
    P[0, 1, 0, 1] = 1.0
    P[1, :, :, 1] = 1.0
    trap = make_game(["A", "B"], ["B"], grids(2, 1), P, np.zeros((2, 2, 1)), np.zeros(2), 1.0)
    with pytest.raises(NotContractive):
        solve(trap)


def test_max_iter_warning():
    g = random_contracting_game(np.random.default_rng(2), max_states=8, max_grid=2)
    with pytest.warns(MaxIterExceeded):
        V, rep = solve(g, "pure_upper", max_iter=2)
    assert not rep.converged and rep.iterations == 2


def test_bad_arguments():
    g = one_step(PENNIES)
    with pytest.raises(ValueError):
        solve(g, "upper")
    with pytest.raises(ValueError):
        solve(g, tol=0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_operators_contract_at_max_discount(seed):
    rng = np.random.default_rng(seed)
    g = random_contracting_game(rng, max_states=12, max_grid=4, max_discount=0.95)
    dmax = g.discount[~g.absorbing_mask].max()
    V, W = rng.normal(size=g.n_states) * 5, rng.normal(size=g.n_states) * 5
    dist = np.abs(V - W).max()
    steps = [bellman_upper_step, bellman_lower_step, lambda gg, v: bellman_relaxed_step(gg, v, tol=1e-12)]
    for step in steps:
        d = np.abs(step(g, V).values - step(g, W).values).max()
        assert d <= dmax * dist + 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_operators_are_monotone(seed):
    rng = np.random.default_rng(seed)
    g = random_contracting_game(rng, max_states=12, max_grid=4)
    V = rng.normal(size=g.n_states)
    W = V + rng.uniform(0, 1, size=g.n_states)
    for step in (bellman_upper_step, bellman_lower_step, bellman_relaxed_step):
        assert np.all(step(g, V).values <= step(g, W).values + 1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fixed_point_is_unique_and_ordered(seed):
    rng = np.random.default_rng(seed)
    g = random_contracting_game(rng, max_states=15, max_grid=4)
    vals = {}
    for m in MODES:
        a = solve(g, m)[0].values
        b = solve(g, m, V0=rng.normal(size=g.n_states) * 10)[0].values
        assert np.abs(a - b).max() <= 1e-7
        vals[m] = a
    assert np.abs(vals["relaxed_upper"] - vals["relaxed_lower"]).max() <= 1e-7
    assert np.all(vals["pure_lower"] <= vals["pure_upper"] + 1e-9)
    assert np.all(vals["relaxed_upper"] <= vals["pure_upper"] + 1e-7)
    assert np.all(vals["relaxed_upper"] >= vals["pure_lower"] - 1e-7)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_separable_games_have_saddle(seed):
    g = random_separable_game(np.random.default_rng(seed), max_states=15, max_grid=5)
    up, lo = solve(g, "pure_upper")[0], solve(g, "pure_lower")[0]
    assert saddle_gap(up, lo).rho <= 1e-8


def pinned_bilinear_game(rng, S, n):
    """Convex-concave costs pinned at (0, 0) with transitions that move only through r1 * r2.

    The grid contains 0, so ``phi(0, j)`` and ``phi(i, 0)`` do not depend on
    the kernel's control part and (0, 0) is a saddle of every state's matrix.
    """
    grid = ControlGrid(-1.0, 1.0, n)
    r = grid.points
    live = S - 1
    base = rng.dirichlet(np.ones(S), size=S)
    direction = rng.normal(size=(S, S))
    direction -= direction.mean(axis=1, keepdims=True)
    scale = 0.9 * base.min(axis=1, keepdims=True) / np.abs(direction).max(axis=1, keepdims=True)
    direction *= scale
    prod = (r[:, None] * r[None, :])
    P = base[:, None, None, :] + prod[None, :, :, None] * direction[:, None, None, :]
    P[live:] = 0.0
    P[live:, :, :, live:] = 1.0
    kappa = rng.uniform(0, 2, S)[:, None, None]
    lam = rng.uniform(0, 2, S)[:, None, None]
    e = rng.uniform(-1, 1, S)[:, None, None]
    c = kappa * r[None, :, None] ** 2 - lam * r[None, None, :] ** 2 + e * prod + rng.normal(size=(S, 1, 1))
    return make_game(list(range(S)), [S - 1], (grid, grid), P, c, rng.normal(size=S), 0.95,
                     StructureTag("bilinear"))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([3, 5, 7]))
def test_pinned_convex_concave_games_have_saddle(seed, n):
    g = pinned_bilinear_game(np.random.default_rng(seed), 8, n)
    for x in range(g.n_states - 1):
        rep = probe_convex_concave(g.costs.running[x])
        assert rep.convex_in_r1 and rep.concave_in_r2
    up, lo = solve(g, "pure_upper")[0], solve(g, "pure_lower")[0]
    assert saddle_gap(up, lo).rho <= 1e-9


def test_convex_concave_grid_game_without_pure_saddle():
    # bilinear (hence convex-concave) cost whose continuous saddle (0.25, 0.25)
    # is off the grid: the discrete pure values differ
    r = np.linspace(-1, 1, 5)
    g = one_step(np.outer(r - 0.25, r - 0.25))
    rep = probe_convex_concave(g.costs.running[0])
    assert rep.convex_in_r1 and rep.concave_in_r2
    up, lo = solve(g, "pure_upper")[0], solve(g, "pure_lower")[0]
    assert up["A"] == pytest.approx(0.1875, abs=1e-15)
    assert lo["A"] == pytest.approx(-0.1875, abs=1e-15)
