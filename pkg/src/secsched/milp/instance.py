"""MILP instance container, big-M/epsilon selection, LP file round-trip."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

BINARY = "binary"
INTEGER = "integer"
CONTINUOUS = "continuous"

LE = "<="
GE = ">="
EQ = "="


class MilpError(ValueError):
    """Raised for malformed instances or unattainable solver tolerances."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lb: float
    ub: float


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[float, str], ...]
    sense: str
    rhs: float


@dataclass(frozen=True)
class IndicatorDef:
    """var = 1  <=>  const + sum(coef * x) >= 0 (integer-valued expression)."""
    var: str
    const: float
    terms: tuple[tuple[float, str], ...]


@dataclass(frozen=True)
class ClampDef:
    """var = max(0, const + sum(coef * x)) at any feasible point."""
    var: str
    const: float
    terms: tuple[tuple[float, str], ...]


@dataclass(frozen=True)
class MilpInstance:
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[str, tuple[tuple[float, str], ...]] | None = None
    m_big: float = 0.0
    epsilon: float = 0.0
    indicator_defs: tuple[IndicatorDef, ...] = ()
    clamp_defs: tuple[ClampDef, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise MilpError(f"unknown variable {name!r}")

    def stats(self) -> dict:
        kinds = {BINARY: 0, INTEGER: 0, CONTINUOUS: 0}
        for v in self.variables:
            kinds[v.kind] += 1
        return {"variables": len(self.variables),
                "binary": kinds[BINARY], "integer": kinds[INTEGER],
                "continuous": kinds[CONTINUOUS],
                "constraints": len(self.constraints),
                "pruned": dict(self.meta.get("pruned", {}))}

    def check(self):
        names = {v.name for v in self.variables}
        if len(names) != len(self.variables):
            raise MilpError("duplicate variable names")
        for c in self.constraints:
            for _, x in c.terms:
                if x not in names:
                    raise MilpError(f"constraint {c.name} references unknown "
                                    f"variable {x!r}")
        if self.objective is not None:
            for _, x in self.objective[1]:
                if x not in names:
                    raise MilpError(f"objective references unknown variable {x!r}")

    def evaluate(self, assignment: dict[str, float]) -> list[str]:
        """Names of constraints violated by a full assignment."""
        bad = []
        for c in self.constraints:
            lhs = sum(coef * assignment[x] for coef, x in c.terms)
            ok = (lhs <= c.rhs + 1e-9 if c.sense == LE else
                  lhs >= c.rhs - 1e-9 if c.sense == GE else
                  abs(lhs - c.rhs) <= 1e-9)
            if not ok:
                bad.append(c.name)
        return bad

    def constant_violations(self) -> list[str]:
        """Violated constraints that reference no variables at all."""
        bad = []
        for c in self.constraints:
            if c.terms:
                continue
            ok = (0 <= c.rhs + 1e-9 if c.sense == LE else
                  0 >= c.rhs - 1e-9 if c.sense == GE else
                  abs(c.rhs) <= 1e-9)
            if not ok:
                bad.append(c.name)
        return bad


def choose_big_m_epsilon(t_max_scale: float, delta_int: float = 1e-5,
                         delta_constr: float = 1e-6) -> tuple[float, float]:
    """Pick (M, epsilon) compatible with the solver tolerances.

    M must dominate every time-testing instant; epsilon must clear the
    integer-feasibility band M*delta_int + delta_constr on both sides of
    the unit interval, or no reliable strict-inequality conversion exists
    at this scale.
    """
    if delta_int <= 0 or delta_constr <= 0:
        raise MilpError("solver tolerances must be positive")
    scale = max(1.0, float(t_max_scale))
    m_big = 10.0 ** (math.ceil(math.log10(scale)) + 1)
    band = m_big * delta_int + delta_constr
    if not band < 0.5 < 1.0 - band:
        raise MilpError(
            f"no epsilon satisfies {band:.6g} < eps < {1.0 - band:.6g} for "
            f"M={m_big:g}; coarsen the resolution or tighten tolerances")
    return m_big, 0.5


def _fmt_num(x) -> str:
    if isinstance(x, float) and x.is_integer():
        x = int(x)
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _fmt_terms(terms) -> str:
    if not terms:
        return "0"
    parts = []
    for coef, var in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt_num(abs(coef))} {var}")
    return " ".join(parts)


def export_lp(instance: MilpInstance, path) -> None:
    """Write the instance in LP format, byte-deterministically.

    Only non-strict senses ever appear; strict inequalities were already
    converted with the instance epsilon during encoding.
    """
    instance.check()
    lines = []
    if instance.objective is None:
        lines.append("Minimize")
        lines.append(" obj: 0")
    else:
        sense, terms = instance.objective
        lines.append("Maximize" if sense == "max" else "Minimize")
        lines.append(f" obj: {_fmt_terms(terms)}")
    lines.append("Subject To")
    for c in instance.constraints:
        op = {LE: "<=", GE: ">=", EQ: "="}[c.sense]
        lines.append(f" {c.name}: {_fmt_terms(c.terms)} {op} {_fmt_num(c.rhs)}")
    bounds = [v for v in instance.variables if v.kind != BINARY]
    if bounds:
        lines.append("Bounds")
        for v in bounds:
            lines.append(f" {_fmt_num(v.lb)} <= {v.name} <= {_fmt_num(v.ub)}")
    generals = [v.name for v in instance.variables if v.kind == INTEGER]
    if generals:
        lines.append("General")
        lines.extend(f" {n}" for n in generals)
    binaries = [v.name for v in instance.variables if v.kind == BINARY]
    if binaries:
        lines.append("Binary")
        lines.extend(f" {n}" for n in binaries)
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_terms(text: str) -> tuple[tuple[float, str], ...]:
    tokens = text.split()
    terms = []
    sign = 1.0
    pending: float | None = None
    for tok in tokens:
        if tok == "+":
            sign = 1.0
        elif tok == "-":
            sign = -1.0
        else:
            try:
                val = float(tok)
            except ValueError:
                coef = sign if pending is None else sign * pending
                terms.append((coef, tok))
                sign, pending = 1.0, None
            else:
                pending = val
    if pending is not None and pending != 0:
        raise MilpError(f"dangling coefficient in terms {text!r}")
    return tuple(terms)


def parse_lp(path) -> MilpInstance:
    """Read back a file produced by export_lp (round-trip checking aid)."""
    with open(path) as fh:
        raw = [ln.rstrip("\n") for ln in fh]
    section = None
    objective = None
    constraints: list[Constraint] = []
    bounds: dict[str, tuple[float, float]] = {}
    generals: list[str] = []
    binaries: list[str] = []
    obj_sense = "min"
    for line in raw:
        stripped = line.strip()
        if not stripped or stripped.startswith("\\"):
            continue
        lowered = stripped.lower()
        if lowered in ("minimize", "maximize"):
            section = "objective"
            obj_sense = "min" if lowered == "minimize" else "max"
            continue
        if lowered == "subject to":
            section = "constraints"
            continue
        if lowered in ("bounds", "general", "binary", "end"):
            section = lowered
            continue
        if section == "objective":
            _, _, expr = stripped.partition(":")
            terms = () if expr.strip() == "0" else _parse_terms(expr)
            objective = (obj_sense, terms)
        elif section == "constraints":
            name, _, rest = stripped.partition(":")
            for op, sense in ((">=", GE), ("<=", LE), ("=", EQ)):
                if op in rest:
                    lhs, _, rhs = rest.partition(op)
                    constraints.append(Constraint(
                        name.strip(), _parse_terms(lhs), sense, float(rhs)))
                    break
            else:
                raise MilpError(f"constraint without sense: {stripped!r}")
        elif section == "bounds":
            lo, _, rest = stripped.partition("<=")
            name, _, hi = rest.partition("<=")
            bounds[name.strip()] = (float(lo), float(hi))
        elif section == "general":
            generals.append(stripped)
        elif section == "binary":
            binaries.append(stripped)
    variables = []
    for name, (lo, hi) in bounds.items():
        kind = INTEGER if name in generals else CONTINUOUS
        variables.append(Variable(name, kind, lo, hi))
    for name in binaries:
        variables.append(Variable(name, BINARY, 0, 1))
    sense_terms = objective
    if sense_terms is not None and not sense_terms[1]:
        sense_terms = None
    return MilpInstance(tuple(variables), tuple(constraints), sense_terms)
