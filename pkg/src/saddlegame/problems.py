"""Problem definitions: inline discrete games, diffusion specs and builtins.

A discrete game is described as::

    {
      "states": ["A", "B"], "absorbing": ["B"],
      "controls": {"player1": {"lo": -1, "hi": 1, "n": 2}, "player2": {...}},
      "transitions": {"A": {"B": 1.0}},          # or [[{..} per r2] per r1]
      "running_cost": {"A": [[1, -1], [-1, 1]]},  # number or n1 x n2 table
      "terminal_cost": {"B": 0.0},
      "discount": 1.0,                            # number or per-state map
      "structure": "general"
    }

Absorbing states always get probability-one self-loops; missing costs are 0.
"""

from __future__ import annotations

import copy

import numpy as np

from .game import ControlGrid, MarkovGame, StructureTag, make_game
from .mca import DiffusionGameSpec, spec_from_config


def _grid(obj, key):
    try:
        return ControlGrid(float(obj["lo"]), float(obj["hi"]), int(obj.get("n", obj.get("n_points", 1))))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{key}: {exc}") from None


def game_from_config(cfg: dict) -> MarkovGame:
    try:
        states = list(cfg["states"])
        ctl = cfg["controls"]
    except KeyError as exc:
        raise ValueError(f"discrete: missing field {exc.args[0]!r}") from None
    absorbing = list(cfg.get("absorbing", []))
    g1 = _grid(ctl.get("player1", {}), "discrete.controls.player1")
    g2 = _grid(ctl.get("player2", {}), "discrete.controls.player2")
    n1, n2 = len(g1), len(g2)
    index = {s: k for k, s in enumerate(states)}
    S = len(states)
    for s in absorbing:
        if s not in index:
            raise ValueError(f"discrete.absorbing: unknown state {s!r}")

    def dist(obj, where):
        if not isinstance(obj, dict):
            raise ValueError(f"{where}: expected a mapping of target state to probability")
        row = np.zeros(S)
        for y, p in obj.items():
            if y not in index:
                raise ValueError(f"{where}: unknown target state {y!r}")
            row[index[y]] += float(p)
        return row

    P = np.zeros((S, n1, n2, S))
    trans = cfg.get("transitions", {})
    for s, spec in trans.items():
        if s not in index:
            raise ValueError(f"discrete.transitions: unknown state {s!r}")
        x = index[s]
        where = f"discrete.transitions.{s}"
        if isinstance(spec, list):
            if len(spec) != n1 or any(not isinstance(r, list) or len(r) != n2 for r in spec):
                raise ValueError(f"{where}: expected a {n1}x{n2} table of distributions")
            for i in range(n1):
                for j in range(n2):
                    P[x, i, j] = dist(spec[i][j], f"{where}[{i}][{j}]")
        else:
            P[x] = dist(spec, where)
    for s in absorbing:
        x = index[s]
        P[x] = 0.0
        P[x, :, :, x] = 1.0

    running = np.zeros((S, n1, n2))
    for s, c in cfg.get("running_cost", {}).items():
        if s not in index:
            raise ValueError(f"discrete.running_cost: unknown state {s!r}")
        c = np.asarray(c, dtype=float)
        if c.ndim == 0:
            running[index[s]] = float(c)
        elif c.shape == (n1, n2):
            running[index[s]] = c
        else:
            raise ValueError(f"discrete.running_cost.{s}: expected a number or a {n1}x{n2} table")
    terminal = np.zeros(S)
    for s, g in cfg.get("terminal_cost", {}).items():
        if s not in index:
            raise ValueError(f"discrete.terminal_cost: unknown state {s!r}")
        terminal[index[s]] = float(g)
    disc = cfg.get("discount", 1.0)
    if isinstance(disc, dict):
        delta = np.ones(S)
        for s, d in disc.items():
            if s not in index:
                raise ValueError(f"discrete.discount: unknown state {s!r}")
            delta[index[s]] = float(d)
    else:
        delta = float(disc)
    return make_game(states, absorbing, (g1, g2), P, running, terminal, delta,
                     StructureTag(cfg.get("structure", "general")))


_UNIT = {"lo": -1.0, "hi": 1.0, "n": 5}

BUILTIN_CONFIGS = {
    "separable-1d": {
        "diffusion": {
            "dim": 1,
            "regimes": 2,
            "domain": {"lo": [-1.0], "hi": [1.0]},
            "controls": {"player1": dict(_UNIT), "player2": dict(_UNIT)},
            "generator": [[-1.0, 1.0], [2.0, -2.0]],
            "discount": 1.0,
            "structure": "separable",
            "drift": {"per_regime": [
                {"b1": [1.0], "b2": [1.0], "b3": [0.25]},
                {"b1": [1.0], "b2": [1.0], "b3": [{"linear": [-0.25]}]},
            ]},
            "covariance": {"per_regime": [[[1.0]], [[0.8]]]},
            "running_cost": {"per_regime": [
                {"const": {"quad": [1.0]}, "r1r1": 1.0, "r2r2": -1.0},
                {"const": {"const": 0.5, "quad": [1.0]}, "r1r1": 1.0, "r2r2": -1.0},
            ]},
            "terminal_cost": {"per_regime": [
                {"const": 1.0, "linear": [0.5]},
                {"const": 0.5, "linear": [-0.25]},
            ]},
        },
    },
    "bilinear-2d": {
        "diffusion": {
            "dim": 2,
            "regimes": 2,
            "domain": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
            "controls": {"player1": dict(_UNIT), "player2": dict(_UNIT)},
            "generator": [[-0.5, 0.5], [0.5, -0.5]],
            "discount": 1.0,
            "structure": "bilinear",
            "drift": {"per_regime": [
                {"b0": [{"const": 0.5, "linear": [0.0, 0.25]}, {"linear": [-0.25, 0.0]}],
                 "b3": [{"const": 0.1, "linear": [-0.4, 0.0]}, {"linear": [0.0, -0.4]}]},
                {"b0": [0.3, -0.3],
                 "b3": [{"linear": [-0.8, 0.0]}, {"const": -0.1, "linear": [0.0, -0.8]}]},
            ]},
            "covariance": {"per_regime": [
                [[0.6, 0.1], [0.1, 0.5]],
                [[0.5, -0.1], [-0.1, 0.6]],
            ]},
            "running_cost": {"per_regime": [
                {"const": {"const": 1.0, "quad": [1.0, 1.0]}, "r1r1": 1.0, "r2r2": -1.0, "r1r2": 0.5},
                {"const": {"const": 0.5, "quad": [0.5, 1.0]}, "r1r1": 0.5, "r2r2": -1.5, "r1r2": -0.5},
            ]},
            "terminal_cost": {"per_regime": [
                {"linear": [1.0, 0.0], "quad": [0.0, 0.5]},
                {"const": 0.5, "linear": [0.0, -0.5]},
            ]},
        },
    },
    "pennies-chain": {
        "discrete": {
            "states": ["A", "B"],
            "absorbing": ["B"],
            "controls": {"player1": {"lo": -1.0, "hi": 1.0, "n": 2},
                         "player2": {"lo": -1.0, "hi": 1.0, "n": 2}},
            "transitions": {"A": {"B": 1.0}},
            "running_cost": {"A": [[1.0, -1.0], [-1.0, 1.0]]},
            "terminal_cost": {"B": 0.0},
            "discount": 1.0,
        },
    },
    "regime-contrast": {
        "diffusion": {
            "dim": 1,
            "regimes": 2,
            "domain": {"lo": [-1.0], "hi": [1.0]},
            "controls": {"player1": dict(_UNIT), "player2": dict(_UNIT)},
            "generator": [[-2.0, 2.0], [2.0, -2.0]],
            "discount": 1.0,
            "structure": "separable",
            "drift": {"per_regime": [
                {"b1": [1.0], "b2": [1.0], "b3": [0.5]},
                {"b1": [1.0], "b2": [1.0], "b3": [-0.5]},
            ]},
            "covariance": [[0.6]],
            "running_cost": {"const": 1.0, "r1r1": 1.0, "r2r2": -1.0},
            "terminal_cost": {"linear": [1.0]},
        },
    },
}

BUILTIN_H_LISTS = {
    "separable-1d": [0.2, 0.1, 0.05],
    "bilinear-2d": [0.2, 0.1, 0.05],
    "regime-contrast": [0.2, 0.1, 0.05],
}


def builtin_config(name: str) -> dict:
    try:
        return copy.deepcopy(BUILTIN_CONFIGS[name])
    except KeyError:
        raise ValueError(f"unknown builtin {name!r}; choose from {sorted(BUILTIN_CONFIGS)}") from None


def load_problem(problem: dict):
    """Resolve a problem block to a :class:`MarkovGame` or :class:`DiffusionGameSpec`."""
    sources = [k for k in ("builtin", "discrete", "diffusion") if k in problem]
    if len(sources) != 1:
        raise ValueError("problem: exactly one of 'builtin', 'discrete', 'diffusion' is required")
    kind = sources[0]
    if kind == "builtin":
        name = problem["builtin"]
        block = builtin_config(name)
        key = next(iter(block))
        if key == "discrete":
            return game_from_config(block[key])
        return spec_from_config(block[key], name=name)
    if kind == "discrete":
        return game_from_config(problem["discrete"])
    return spec_from_config(problem["diffusion"], name="inline")


def builtin_examples() -> dict:
    """Every builtin problem by name."""
    return {name: load_problem({"builtin": name}) for name in BUILTIN_CONFIGS}


__all__ = ["MarkovGame", "DiffusionGameSpec", "builtin_examples", "load_problem", "game_from_config"]
