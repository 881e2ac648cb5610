"""Analytic coefficient families used to describe diffusion games in configs.

A scalar field of ``x`` is one of

* a number (constant),
* ``{"const": c, "linear": [l_1..l_d], "quad": [q_1..q_d]}`` meaning
  ``c + sum_j l_j x_j + sum_j q_j x_j**2``,
* ``{"table": {"axes": [[...], ...], "values": nested list}}``, multilinear
  interpolation of tabulated values; placed on the lattice it overrides the
  analytic forms point by point.

All fields evaluate vectorized on arrays of shape ``(N, d)``.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MONOMIALS = ("const", "r1", "r2", "r1r1", "r2r2", "r1r2")
DRIFT_TERMS = ("b0", "b1", "b2", "b3")


class PolyField:
    """Constant, affine or per-coordinate quadratic scalar field."""

    def __init__(self, dim: int, const=0.0, linear=None, quad=None):
        self.dim = dim
        self.const = float(const)
        self.linear = np.zeros(dim) if linear is None else np.asarray(linear, dtype=float)
        self.quad = np.zeros(dim) if quad is None else np.asarray(quad, dtype=float)
        if self.linear.shape != (dim,) or self.quad.shape != (dim,):
            raise ValueError(f"linear/quad coefficients must have length {dim}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.const + x @ self.linear + (x * x) @ self.quad

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0 and not self.linear.any() and not self.quad.any()

    def to_config(self):
        if not self.linear.any() and not self.quad.any():
            return self.const
        out = {"const": self.const}
        if self.linear.any():
            out["linear"] = self.linear.tolist()
        if self.quad.any():
            out["quad"] = self.quad.tolist()
        return out


class TableField:
    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.dim = len(self.axes)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("table values do not match axis lengths")
        self._interp = RegularGridInterpolator(self.axes, self.values, method="linear", bounds_error=False, fill_value=None)

    def __call__(self, x):
        return self._interp(np.asarray(x, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not self.values.any()

    def to_config(self):
        return {"table": {"axes": [a.tolist() for a in self.axes], "values": self.values.tolist()}}


def parse_field(obj, dim: int, where: str = "field"):
    if isinstance(obj, bool):
        raise ValueError(f"{where}: expected a number or field description, got a boolean")
    if isinstance(obj, (int, float)):
        return PolyField(dim, const=obj)
    if isinstance(obj, dict):
        if "table" in obj:
            t = obj["table"]
            try:
                f = TableField(t["axes"], t["values"])
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{where}: malformed table ({exc})") from None
            if f.dim != dim:
                raise ValueError(f"{where}: table has {f.dim} axes, expected {dim}")
            return f
        unknown = set(obj) - {"const", "linear", "quad"}
        if unknown:
            raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
        try:
            return PolyField(dim, obj.get("const", 0.0), obj.get("linear"), obj.get("quad"))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{where}: {exc}") from None
    raise ValueError(f"{where}: expected a number or field description, got {type(obj).__name__}")


class BilinearDrift:
    """``b(x, r1, r2) = r1 r2 b0(x) + r1 b1(x) + r2 b2(x) + b3(x)``, vector valued."""

    def __init__(self, dim: int, terms: dict):
        self.dim = dim
        self.terms = {}
        for name in DRIFT_TERMS:
            spec = terms.get(name, [0.0] * dim)
            if not isinstance(spec, list) or len(spec) != dim:
                raise ValueError(f"drift.{name}: expected a list of {dim} fields")
            self.terms[name] = [parse_field(f, dim, f"drift.{name}[{k}]") for k, f in enumerate(spec)]
        unknown = set(terms) - set(DRIFT_TERMS)
        if unknown:
            raise ValueError(f"drift: unknown keys {sorted(unknown)}")

    def coefficient(self, name, x):
        return np.stack([f(x) for f in self.terms[name]], axis=-1)

    def __call__(self, x, r1, r2):
        c = self.coefficient
        return r1 * r2 * c("b0", x) + r1 * c("b1", x) + r2 * c("b2", x) + c("b3", x)

    def has(self, name) -> bool:
        return not all(f.is_zero for f in self.terms[name])

    def to_config(self):
        return {n: [f.to_config() for f in fs] for n, fs in self.terms.items() if not all(f.is_zero for f in fs)}


class QuadraticCost:
    """Running cost polynomial of degree two in the controls with field coefficients."""

    def __init__(self, dim: int, terms):
        if isinstance(terms, (int, float, bool)) or (isinstance(terms, dict) and not set(terms) <= set(MONOMIALS)):
            terms = {"const": terms}
        if not isinstance(terms, dict):
            raise ValueError("running_cost: expected a mapping of monomials to fields")
        self.dim = dim
        self.terms = {m: parse_field(terms.get(m, 0.0), dim, f"running_cost.{m}") for m in MONOMIALS}

    def __call__(self, x, r1, r2):
        t = self.terms
        mono = {"const": 1.0, "r1": r1, "r2": r2, "r1r1": r1 * r1, "r2r2": r2 * r2, "r1r2": r1 * r2}
        out = 0.0
        for m in MONOMIALS:
            if not t[m].is_zero:
                out = out + mono[m] * t[m](x)
        return out + np.zeros(np.asarray(x).shape[0])

    def has(self, name) -> bool:
        return not self.terms[name].is_zero

    def to_config(self):
        return {m: f.to_config() for m, f in self.terms.items() if not f.is_zero}


class CovarianceField:
    def __init__(self, dim: int, rows):
        if isinstance(rows, (int, float)) and not isinstance(rows, bool):
            rows = [[rows if j == k else 0.0 for k in range(dim)] for j in range(dim)]
        if not isinstance(rows, list) or len(rows) != dim or any(not isinstance(r, list) or len(r) != dim for r in rows):
            raise ValueError(f"covariance: expected a {dim}x{dim} matrix of fields")
        self.dim = dim
        self.entries = [[parse_field(f, dim, f"covariance[{j}][{k}]") for k, f in enumerate(r)] for j, r in enumerate(rows)]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.stack([f(x) for f in row], axis=-1) for row in self.entries], axis=-2)

    def to_config(self):
        return [[f.to_config() for f in row] for row in self.entries]
