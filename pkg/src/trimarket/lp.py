"""Sparse linear programs with named variables and dual-tagged rows.

Names are tuples ``(family, *index)``, e.g. ``("P_G", "G1", 3)`` or
``("lambda", 4, 3)``.  ``fmt_name`` renders them as ``P_G[G1,3]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

Name = tuple
SENSES = ("<=", "=", ">=")


class ModelError(ValueError):
    """Invalid model construction (duplicate names, unknown references)."""


def fmt_name(name: Name) -> str:
    family, *index = name
    if not index:
        return str(family)
    return f"{family}[{','.join(str(i) for i in index)}]"


def name_key(name: Name) -> tuple:
    """Sort key giving a deterministic order over mixed int/str names."""
    return tuple((0, v, "") if isinstance(v, (int, np.integer)) else (1, 0, str(v)) for v in name)


@dataclass(frozen=True)
class VariableRef:
    index: int
    name: Name
    lower: float = -math.inf
    upper: float = math.inf
    cost: float = 0.0

    def __str__(self) -> str:
        return fmt_name(self.name)


@dataclass(frozen=True)
class ConstraintRow:
    tag: Name
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float

    def activity(self, x: np.ndarray) -> float:
        return float(sum(a * x[j] for j, a in self.coeffs))


@dataclass
class LinearProgram:
    """A minimization LP ``min c'x + c0`` over rows with unique dual tags."""

    market: str = ""
    variables: list[VariableRef] = field(default_factory=list)
    rows: list[ConstraintRow] = field(default_factory=list)
    objective_constant: float = 0.0
    _var_index: dict = field(default_factory=dict, repr=False)
    _row_index: dict = field(default_factory=dict, repr=False)

    def add_variable(self, name: Name, lower: float = -math.inf, upper: float = math.inf,
                     cost: float = 0.0) -> VariableRef:
        if name in self._var_index:
            raise ModelError(f"duplicate variable {fmt_name(name)}")
        if lower > upper:
            raise ModelError(f"variable {fmt_name(name)} has lower bound above upper bound")
        if not math.isfinite(cost):
            raise ModelError(f"variable {fmt_name(name)} has a non-finite cost")
        ref = VariableRef(len(self.variables), name, float(lower), float(upper), float(cost))
        self.variables.append(ref)
        self._var_index[name] = ref.index
        return ref

    def add_constraint(self, tag: Name, coeffs: Mapping[Name, float] | Iterable[tuple[Name, float]],
                       sense: str, rhs: float) -> Name:
        """Append a row; returns its dual tag."""
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        if tag in self._row_index:
            raise ModelError(f"duplicate dual tag {fmt_name(tag)}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for name, a in items:
            j = self._var_index.get(name)
            if j is None:
                raise ModelError(f"row {fmt_name(tag)} references unknown variable {fmt_name(name)}")
            if j in merged:
                raise ModelError(f"row {fmt_name(tag)} lists {fmt_name(name)} twice")
            merged[j] = float(a)
        row = ConstraintRow(tag, tuple(merged.items()), sense, float(rhs))
        self._row_index[tag] = len(self.rows)
        self.rows.append(row)
        return tag

    def variable(self, name: Name) -> VariableRef:
        try:
            return self.variables[self._var_index[name]]
        except KeyError:
            raise KeyError(fmt_name(name)) from None

    def row(self, tag: Name) -> ConstraintRow:
        try:
            return self.rows[self._row_index[tag]]
        except KeyError:
            raise KeyError(fmt_name(tag)) from None

    def has_variable(self, name: Name) -> bool:
        return name in self._var_index

    def has_row(self, tag: Name) -> bool:
        return tag in self._row_index

    def rows_of(self, family: str) -> list[ConstraintRow]:
        return [r for r in self.rows if r.tag[0] == family]

    def variables_of(self, family: str) -> list[VariableRef]:
        return [v for v in self.variables if v.name[0] == family]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def cost_vector(self) -> np.ndarray:
        return np.array([v.cost for v in self.variables])

    def matrix(self) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for i, row in enumerate(self.rows):
            for j, a in row.coeffs:
                ri.append(i)
                ci.append(j)
                data.append(a)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), self.n_vars))

    def vector(self, assignment: Mapping[Name, float]) -> np.ndarray:
        missing = [v.name for v in self.variables if v.name not in assignment]
        if missing:
            raise ModelError(f"assignment misses {len(missing)} variable(s), e.g. {fmt_name(missing[0])}")
        return np.array([float(assignment[v.name]) for v in self.variables])

    def objective(self, x: np.ndarray) -> float:
        return float(self.cost_vector @ x + self.objective_constant)


@dataclass
class ResidualReport:
    residuals: dict[Name, float]
    objective: float
    bound_violations: dict[Name, float] = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        vals = [abs(v) for v in self.residuals.values()] + list(self.bound_violations.values())
        return max(vals, default=0.0)


def primal_residuals(lp: LinearProgram, assignment: Mapping[Name, float]) -> ResidualReport:
    """Signed violation of each row at ``assignment`` plus the objective value.

    ``<=`` rows report ``max(0, a'x - b)``, ``>=`` rows ``max(0, b - a'x)`` and
    equality rows ``a'x - b``.
    """
    x = lp.vector(assignment)
    act = lp.matrix() @ x
    res = {}
    for row, ax in zip(lp.rows, act):
        if row.sense == "=":
            res[row.tag] = float(ax - row.rhs)
        elif row.sense == "<=":
            res[row.tag] = max(0.0, float(ax - row.rhs))
        else:
            res[row.tag] = max(0.0, float(row.rhs - ax))
    bounds = {}
    for v, xv in zip(lp.variables, x):
        viol = max(v.lower - xv, xv - v.upper, 0.0)
        if viol > 0:
            bounds[v.name] = viol
    return ResidualReport(res, lp.objective(x), bounds)


def _fmt_coef(a: float) -> str:
    return f"{a:+.10g}"


def dump(lp: LinearProgram) -> str:
    """Human-readable listing of an LP, one row per line."""
    names = [fmt_name(v.name) for v in lp.variables]
    out = [f"\\ market: {lp.market}", "minimize"]
    terms = [f"{_fmt_coef(v.cost)} {names[v.index]}" for v in lp.variables if v.cost]
    out.append("  " + (" ".join(terms) if terms else "0") + f" {_fmt_coef(lp.objective_constant)}")
    out.append("subject to")
    for row in lp.rows:
        lhs = " ".join(f"{_fmt_coef(a)} {names[j]}" for j, a in row.coeffs) or "0"
        out.append(f"  {fmt_name(row.tag)}: {lhs} {row.sense} {row.rhs:.10g}")
    bounded = [v for v in lp.variables if math.isfinite(v.lower) or math.isfinite(v.upper)]
    if bounded:
        out.append("bounds")
        out.extend(f"  {v.lower:g} <= {names[v.index]} <= {v.upper:g}" for v in bounded)
    return "\n".join(out) + "\n"
