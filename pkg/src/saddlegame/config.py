"""Run configuration: a versioned JSON document naming a problem and parameters.

::

    {
      "version": 1,
      "problem": {"builtin": "separable-1d"},   # or "discrete": {...} or "diffusion": {...}
      "params": {"modes": ["pure_upper", "pure_lower"], "tol": 1e-9, "h": 0.1,
                 "h_list": [0.2, 0.1, 0.05], "paths": 100000, "seed": 0,
                 "probe_points": [{"x": [0.0], "regime": 0}]},
      "output_dir": "out"
    }

Errors are reported as :class:`ConfigError` carrying the line of the
offending field in the source text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .problems import BUILTIN_H_LISTS, load_problem
from .solver import DEFAULT_MAX_ITER, MODES
from .static import DEFAULT_TOL

VERSION = 1
_TOP_KEYS = {"version", "problem", "params", "output_dir"}
_PARAM_KEYS = {"modes", "tol", "max_iter", "h", "h_list", "paths", "seed", "probe_points",
               "max_steps", "start", "policy_mode"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _locate(text: str, path) -> int | None:
    """Line of the last key of ``path`` found by scanning keys in order."""
    pos = 0
    found = None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos = m.end()
        found = m.start()
    return None if found is None else text.count("\n", 0, found) + 1


def _error_path(message: str) -> list:
    head = message.split(":", 1)[0].strip()
    if " " in head:
        return []
    return [p for p in re.split(r"[.\[\]]+", head) if p and not p.isdigit()]


def _number(v, name, *, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{name}: expected a number")
    if integer and (not float(v).is_integer()):
        raise ValueError(f"{name}: expected an integer")
    return int(v) if integer else float(v)


@dataclass(frozen=True)
class RunConfig:
    problem: dict
    modes: tuple = MODES
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    h: float | None = None
    h_list: tuple | None = None
    paths: int = 10**5
    seed: int = 0
    probe_points: tuple | None = None
    max_steps: int | None = None
    start: object = None
    policy_mode: str = "relaxed_upper"
    output_dir: str = "out"
    version: int = VERSION
    source: str = field(default="<config>", compare=False)

    @property
    def problem_kind(self) -> str:
        return next(iter(self.problem))

    def resolved_h_list(self):
        if self.h_list is not None:
            return list(self.h_list)
        if self.problem_kind == "builtin" and self.problem["builtin"] in BUILTIN_H_LISTS:
            return list(BUILTIN_H_LISTS[self.problem["builtin"]])
        return None

    def load(self):
        return load_problem(self.problem)

    def to_dict(self) -> dict:
        params = {"modes": list(self.modes), "tol": self.tol, "max_iter": self.max_iter,
                  "paths": self.paths, "seed": self.seed, "policy_mode": self.policy_mode}
        if self.h is not None:
            params["h"] = self.h
        if self.h_list is not None:
            params["h_list"] = list(self.h_list)
        if self.probe_points is not None:
            params["probe_points"] = [{"x": list(x), "regime": a} for x, a in self.probe_points]
        if self.max_steps is not None:
            params["max_steps"] = self.max_steps
        if self.start is not None:
            params["start"] = self.start
        return {"version": self.version, "problem": self.problem, "params": params, "output_dir": self.output_dir}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"column {exc.colno}: {exc.msg}", exc.lineno, source) from None

    def fail(msg, *path):
        raise ConfigError(msg, _locate(text, path) if path else None, source)

    if not isinstance(doc, dict):
        fail("top level must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        fail(f"unknown field {k!r}", k)
    if "version" not in doc:
        fail("missing field 'version'")
    if doc["version"] != VERSION:
        fail(f"version: unsupported value {doc['version']!r} (expected {VERSION})", "version")
    problem = doc.get("problem")
    if not isinstance(problem, dict):
        fail("problem: expected an object", "problem")
    sources = [k for k in ("builtin", "discrete", "diffusion") if k in problem]
    if len(sources) != 1 or len(problem) != 1:
        fail("problem: exactly one of 'builtin', 'discrete', 'diffusion' is required", "problem")

    params = doc.get("params", {})
    if not isinstance(params, dict):
        fail("params: expected an object", "params")
    unknown = set(params) - _PARAM_KEYS
    if unknown:
        k = sorted(unknown)[0]
        fail(f"params.{k}: unknown field", "params", k)
    kw = {}
    try:
        if "modes" in params:
            modes = params["modes"]
            if modes == "all":
                modes = list(MODES)
            if not isinstance(modes, list) or not modes or any(m not in MODES for m in modes):
                raise ValueError(f"modes: expected a non-empty list from {list(MODES)} or \"all\"")
            kw["modes"] = tuple(m for m in MODES if m in modes)
        if "tol" in params:
            kw["tol"] = _number(params["tol"], "tol")
            if not kw["tol"] > 0:
                raise ValueError("tol: must be > 0")
        if "max_iter" in params:
            kw["max_iter"] = _number(params["max_iter"], "max_iter", integer=True)
            if kw["max_iter"] < 1:
                raise ValueError("max_iter: must be >= 1")
        if params.get("h") is not None:
            kw["h"] = _number(params["h"], "h")
            if not kw["h"] > 0:
                raise ValueError("h: must be > 0")
        if params.get("h_list") is not None:
            hl = params["h_list"]
            if not isinstance(hl, list) or not hl:
                raise ValueError("h_list: expected a non-empty list")
            hl = [_number(v, "h_list") for v in hl]
            if any(not v > 0 for v in hl):
                raise ValueError("h_list: every h must be > 0")
            if len(set(hl)) != len(hl):
                raise ValueError("h_list: repeated values")
            kw["h_list"] = tuple(hl)
        if "paths" in params:
            kw["paths"] = _number(params["paths"], "paths", integer=True)
            if kw["paths"] < 1:
                raise ValueError("paths: must be >= 1")
        if "seed" in params:
            kw["seed"] = _number(params["seed"], "seed", integer=True)
            if not 0 <= kw["seed"] < 2**64:
                raise ValueError("seed: must be in [0, 2^64)")
        if params.get("max_steps") is not None:
            kw["max_steps"] = _number(params["max_steps"], "max_steps", integer=True)
            if kw["max_steps"] < 1:
                raise ValueError("max_steps: must be >= 1")
        if params.get("probe_points") is not None:
            pp = params["probe_points"]
            if not isinstance(pp, list) or not pp:
                raise ValueError("probe_points: expected a non-empty list")
            out = []
            for p in pp:
                if not isinstance(p, dict) or "x" not in p or not isinstance(p["x"], list):
                    raise ValueError('probe_points: each entry needs "x": [...] and optional "regime"')
                out.append((tuple(_number(v, "probe_points.x") for v in p["x"]),
                            _number(p.get("regime", 0), "probe_points.regime", integer=True)))
            kw["probe_points"] = tuple(out)
        if params.get("start") is not None:
            kw["start"] = params["start"]
        if "policy_mode" in params:
            if params["policy_mode"] not in MODES:
                raise ValueError(f"policy_mode: expected one of {list(MODES)}")
            kw["policy_mode"] = params["policy_mode"]
    except ValueError as exc:
        name = str(exc).split(":", 1)[0].split(".")[0]
        raise ConfigError(f"params.{exc}", _locate(text, ("params", name)), source) from None

    out_dir = doc.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        fail("output_dir: expected a non-empty string", "output_dir")

    cfg = RunConfig(problem=problem, output_dir=out_dir, version=doc["version"], source=source, **kw)
    try:
        cfg.load()
    except (ValueError, TypeError, KeyError) as exc:
        path = ["problem", sources[0]] + _error_path(str(exc))
        raise ConfigError(f"problem: {exc}", _locate(text, path), source) from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, str(path))
