"""Command-line front end.

    saddlegame solve|build|check|sweep|simulate|config-dump --config PATH [--out DIR] [--workers N] [--seed N]

Every command writes CSV files plus ``summary.txt`` (``key=value`` lines)
into the output directory and exits with a code from :data:`EXIT_CODES`.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .errors import (ConsistencyViolation, DegenerateDiffusion, HTooLarge, InvalidGame, MaxIterExceeded,
                     NotContractive, SaddleGameError)
from .game import MarkovGame, validate_game
from .harness import _csv_text, default_probe_points, fmt, h_sweep, simulate_cost
from .mca import (ChainApproximation, DiffusionGameSpec, build_chain, check_local_consistency,
                  diagonal_dominance_check, max_h_bound)
from .solver import MODES, contraction_certificate, extract_policies, saddle_gap, solve

log = logging.getLogger("saddlegame")

EXIT_CODES = {
    "ok": 0,
    "config_error": 1,
    "non_convergence": 2,
    "validation_failure": 3,
    "h_bound_violation": 4,
    "sweep_failure": 5,
    "simulation_truncation": 6,
}


class _Exit(Exception):
    def __init__(self, outcome: str, message: str = ""):
        self.outcome = outcome
        super().__init__(message)


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _summary(out: Path, items: list, name: str = "summary.txt"):
    lines = []
    for k, v in items:
        if isinstance(v, str):
            lines.append(f"{k}={v}")
        elif v is None:
            lines.append(f"{k}=")
        else:
            lines.append(f"{k}={fmt(v)}")
    _write(out, name, "\n".join(lines) + "\n")


def _state_table(target):
    """Leading columns identifying each state: header and per-state cells."""
    if isinstance(target, ChainApproximation):
        g = target.game
        d = target.spec.dim
        header = ["state"] + [f"x{j}" for j in range(d)] + ["regime", "absorbing"]
        rows = [[s] + list(target.coords[s]) + [int(target.regimes[s]), bool(g.absorbing_mask[s])]
                for s in range(g.n_states)]
        return header, rows
    g = target
    return ["state", "absorbing"], [[str(s), bool(g.absorbing_mask[k])] for k, s in enumerate(g.space.states)]


def _problem_label(cfg: RunConfig) -> str:
    if cfg.problem_kind == "builtin":
        return f"builtin:{cfg.problem['builtin']}"
    return f"inline:{cfg.problem_kind}"


def _spec_problems(spec):
    problems = spec.problems()
    if problems:
        raise _Exit("validation_failure", "invalid diffusion spec: " + "; ".join(problems))


def _materialize(cfg: RunConfig):
    """The discrete game to solve: the problem itself or its chain at ``h``."""
    problem = cfg.load()
    if isinstance(problem, MarkovGame):
        return problem, problem
    _spec_problems(problem)
    if cfg.h is None:
        raise _Exit("config_error", "params.h: required for diffusion problems")
    try:
        chain = build_chain(problem, cfg.h)
    except HTooLarge as exc:
        raise _Exit("h_bound_violation", str(exc)) from None
    except DegenerateDiffusion as exc:
        raise _Exit("validation_failure", str(exc)) from None
    except ValueError as exc:
        raise _Exit("config_error", f"params.h: {exc}") from None
    return chain, chain.game


def _validated(game):
    violations = validate_game(game)
    if violations:
        raise _Exit("validation_failure", "; ".join(str(v) for v in violations[:5]))
    try:
        contraction_certificate(game)
    except NotContractive as exc:
        raise _Exit("validation_failure", str(exc)) from None


def cmd_solve(cfg: RunConfig, out: Path, workers: int = 1) -> str:
    target, game = _materialize(cfg)
    _validated(game)
    header, prefix = _state_table(target)
    n1, n2 = game.shape[1:]
    summary = [("command", "solve"), ("problem", _problem_label(cfg)), ("n_states", game.n_states)]
    if isinstance(target, ChainApproximation):
        summary.append(("h", target.h))
    values = {}
    outcome = "ok"
    for mode in cfg.modes:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V, rep = solve(game, mode, tol=cfg.tol, max_iter=cfg.max_iter)
        values[mode] = V
        pol = extract_policies(game, V, mode, tol=cfg.tol)
        _write(out, f"values_{mode}.csv",
               _csv_text(header + ["value"], [p + [v] for p, v in zip(prefix, V.values)]))
        pcols = [f"p1_{i}" for i in range(n1)] + [f"p2_{j}" for j in range(n2)]
        _write(out, f"policy_{mode}.csv",
               _csv_text(header + pcols, [p + list(a) + list(b) for p, a, b in zip(prefix, pol.player1, pol.player2)]))
        summary += [(f"{mode}.iterations", rep.iterations), (f"{mode}.residual", rep.final_residual),
                    (f"{mode}.converged", rep.converged), (f"{mode}.certificate_kind", rep.certificate_kind),
                    (f"{mode}.contraction_certificate", rep.contraction_certificate)]
        if not rep.converged:
            outcome = "non_convergence"
    if "pure_upper" in values and "pure_lower" in values:
        gap = saddle_gap(values["pure_upper"], values["pure_lower"])
        summary += [("rho", gap.rho), ("rho_state", str(gap.argmax_state))]
    summary.append(("exit_status", EXIT_CODES[outcome]))
    _summary(out, summary)
    return outcome


def cmd_build(cfg: RunConfig, out: Path, workers: int = 1) -> str:
    problem = cfg.load()
    if not isinstance(problem, DiffusionGameSpec):
        raise _Exit("config_error", "problem: build needs a diffusion problem")
    target, game = _materialize(cfg)
    d = problem.dim
    n1, n2 = game.shape[1:]
    m = game.kernel.matrix.tocoo()
    row = m.row
    x, ij = np.divmod(row, n1 * n2)
    i, j = np.divmod(ij, n2)
    y = m.col
    order = np.lexsort((y, j, i, x))
    header = ([f"x{k}" for k in range(d)] + ["regime", "r1_index", "r2_index"]
              + [f"y{k}" for k in range(d)] + ["regime_to", "probability"])
    cx, cy = target.coords, target.regimes
    rows = []
    for t in order:
        a, b = x[t], y[t]
        rows.append(list(cx[a]) + [int(cy[a]), int(i[t]), int(j[t])] + list(cx[b]) + [int(cy[b]), m.data[t]])
    _write(out, "edges.csv", _csv_text(header, rows))
    sheader = ["state"] + [f"x{k}" for k in range(d)] + ["regime", "absorbing", "dt", "delta"]
    srows = [[s] + list(cx[s]) + [int(cy[s]), bool(game.absorbing_mask[s]), target.dt[s], game.discount[s]]
             for s in range(game.n_states)]
    _write(out, "states.csv", _csv_text(sheader, srows))
    rs = game.kernel.row_sums()
    _summary(out, [("command", "build"), ("problem", _problem_label(cfg)), ("h", target.h),
                   ("h_max", max_h_bound(problem, target.lattice)), ("n_states", game.n_states),
                   ("n_edges", int(m.nnz)), ("max_row_sum_error", float(np.abs(rs - 1.0).max())),
                   ("exit_status", 0)])
    return "ok"


def cmd_check(cfg: RunConfig, out: Path, workers: int = 1) -> str:
    problem = cfg.load()
    checks = []   # (name, passed, value, detail)
    outcome = "ok"
    if isinstance(problem, MarkovGame):
        viol = validate_game(problem)
        checks.append(("validate_game", not viol, len(viol), "; ".join(str(v) for v in viol[:5])))
        try:
            kind, val = contraction_certificate(problem)
            checks.append(("contraction", True, val, kind))
        except NotContractive as exc:
            checks.append(("contraction", False, 0.0, str(exc)))
        if any(not c[1] for c in checks):
            outcome = "validation_failure"
    else:
        _spec_problems(problem)
        dom = diagonal_dominance_check(problem)
        checks.append(("diagonal_dominance", dom.ok, dom.worst_margin,
                       f"worst at x={list(dom.worst_point[0])} regime={dom.worst_point[1]} axis={dom.worst_point[2]}"))
        if not dom.ok:
            outcome = "validation_failure"
        h_max = None
        if dom.ok:
            try:
                h_max = max_h_bound(problem)
            except DegenerateDiffusion as exc:
                checks.append(("h_bound", False, 0.0, str(exc)))
                outcome = "validation_failure"
        if h_max is not None:
            if cfg.h is None:
                checks.append(("h_bound", True, h_max, "h_max (no h configured)"))
            else:
                try:
                    chain = build_chain(problem, cfg.h)
                    checks.append(("h_bound", True, max_h_bound(problem, chain.lattice), f"h={fmt(cfg.h)}"))
                except HTooLarge as exc:
                    checks.append(("h_bound", False, exc.h_max, str(exc)))
                    outcome = "h_bound_violation"
                    chain = None
                except ValueError as exc:
                    raise _Exit("config_error", f"params.h: {exc}") from None
                if chain is not None:
                    viol = validate_game(chain.game)
                    checks.append(("validate_game", not viol, len(viol), "; ".join(str(v) for v in viol[:5])))
                    try:
                        rep = check_local_consistency(chain)
                        checks += [
                            ("consistency_mean", True, rep.worst_mean_defect, f"constant={fmt(rep.constant)}"),
                            ("consistency_regime", True, rep.worst_regime_defect, f"constant={fmt(rep.constant)}"),
                            ("consistency_covariance", True, rep.worst_cov_defect, f"constant={fmt(rep.cov_constant)}"),
                            ("max_step", True, rep.max_step, f"bound={fmt(cfg.h * np.sqrt(2))}"),
                        ]
                    except ConsistencyViolation as exc:
                        checks.append(("local_consistency", False, exc.magnitude, str(exc)))
                    if any(not c[1] for c in checks) and outcome == "ok":
                        outcome = "validation_failure"
    _write(out, "check.csv", _csv_text(["check", "passed", "value", "detail"], [list(c) for c in checks]))
    _summary(out, [("command", "check"), ("problem", _problem_label(cfg)),
                   ("passed", all(c[1] for c in checks)), ("exit_status", EXIT_CODES[outcome])])
    return outcome


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1) -> str:
    problem = cfg.load()
    if not isinstance(problem, DiffusionGameSpec):
        raise _Exit("config_error", "problem: sweep needs a diffusion problem")
    _spec_problems(problem)
    h_list = cfg.resolved_h_list()
    if h_list is None:
        raise _Exit("config_error", "params.h_list: required for inline diffusion problems")
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", MaxIterExceeded)
            res = h_sweep(problem, h_list, cfg.probe_points, cfg.modes, cfg.tol, cfg.max_iter, workers)
    except (SaddleGameError, MaxIterExceeded, ValueError, FloatingPointError) as exc:
        raise _Exit("sweep_failure", f"{type(exc).__name__}: {exc}") from None
    _write(out, "sweep.csv", res.to_csv())
    _write(out, "sweep_probes.csv", res.probes_csv())
    _write(out, "sweep_plot_data.csv", res.plot_data_csv())
    items = [("command", "sweep"), ("problem", _problem_label(cfg)), ("rows", len(res.rows)),
             ("modes", ",".join(res.modes)), ("max_rho", max(r.rho for r in res.rows))]
    _summary(out, items + [("exit_status", 0)])
    _summary(out, [(f"h={fmt(r.h)}.wall_time", r.wall_time) for r in res.rows]
             + [("total_wall_time", time.perf_counter() - t0)], name="timing.txt")
    return "ok"


def cmd_simulate(cfg: RunConfig, out: Path, workers: int = 1) -> str:
    target, game = _materialize(cfg)
    _validated(game)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        V, rep = solve(game, cfg.policy_mode, tol=cfg.tol, max_iter=cfg.max_iter)
    if not rep.converged:
        raise _Exit("non_convergence", f"{cfg.policy_mode} did not converge")
    pol = extract_policies(game, V, cfg.policy_mode, tol=cfg.tol)
    start = cfg.start
    if start is None and isinstance(target, ChainApproximation) and cfg.probe_points:
        start = cfg.probe_points[0]
    elif isinstance(start, dict):
        start = (tuple(start["x"]), int(start.get("regime", 0)))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = simulate_cost(target, pol, paths=cfg.paths, max_steps=cfg.max_steps, seed=cfg.seed,
                                start=start, workers=workers)
    except (KeyError, ValueError) as exc:
        raise _Exit("config_error", f"params.start: {exc}") from None
    dp = V[est.start]
    header = est.column_names() + ["policy_mode", "dp_value", "abs_error"]
    body = est.to_csv().splitlines()[1]
    text = ",".join(header) + "\n" + body + "," + ",".join([cfg.policy_mode, fmt(dp), fmt(abs(est.mean - dp))]) + "\n"
    _write(out, "simulation.csv", text)
    outcome = "simulation_truncation" if est.truncation_fraction > 0.01 else "ok"
    _summary(out, [("command", "simulate"), ("problem", _problem_label(cfg)), ("policy_mode", cfg.policy_mode),
                   ("start", str(est.start)), ("mean", est.mean), ("std_error", est.std_error),
                   ("dp_value", dp), ("truncation_fraction", est.truncation_fraction),
                   ("exit_status", EXIT_CODES[outcome])])
    return outcome


def cmd_config_dump(cfg: RunConfig, out: Path | None, workers: int = 1) -> str:
    text = cfg.dumps()
    sys.stdout.write(text)
    if out is not None:
        _write(out, "config.json", text)
    return "ok"


COMMANDS = {
    "solve": cmd_solve,
    "build": cmd_build,
    "check": cmd_check,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "config-dump": cmd_config_dump,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saddlegame", description="Zero-sum Markov and diffusion game solver.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="path to the JSON run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--workers", type=int, default=1, help="cap on module-level parallelism")
    p.add_argument("--seed", type=int, default=None, help="overrides params.seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CODES["config_error"]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["config_error"]
    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be nonnegative", file=sys.stderr)
            return EXIT_CODES["config_error"]
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CODES["config_error"]
    if args.command == "config-dump":
        out = Path(args.out) if args.out else None
    else:
        out = Path(args.out) if args.out else Path(cfg.output_dir)
    try:
        outcome = COMMANDS[args.command](cfg, out, args.workers)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        outcome = exc.outcome
    except InvalidGame as exc:
        print(f"error: {exc}", file=sys.stderr)
        outcome = "validation_failure"
    log.info("outcome %s", outcome)
    return EXIT_CODES[outcome]


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "EXIT_CODES", "COMMANDS", "MODES", "default_probe_points"]
