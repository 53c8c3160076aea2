"""Demand-condition MILP encodings with big-M indicator linearization.

Feasible points of an encoding are exactly the parameter assignments whose
testing-set demand condition holds on the resource.  Two indicator families
track every frame against every symbolic testing instant: one marks the
frame's absolute deadline falling at or before the instant, the other marks
its release falling at or after it.  Per-task counter variables clamp the
signed difference of the two families at zero, which reproduces the exact
contained-frame count of the analytic test; a single family cannot, because
frames straddling the window start would be miscounted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..model import ModelError, SecureTask
from .instance import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, ClampDef,
                       Constraint, IndicatorDef, MilpError, MilpInstance,
                       Variable, choose_big_m_epsilon)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]", "_", name)


class LinExpr:
    """Affine integer expression over parameter variables."""

    __slots__ = ("const", "terms")

    def __init__(self, const=0, terms=None):
        self.const = const
        self.terms = dict(terms or {})

    def __add__(self, other):
        if isinstance(other, int):
            return LinExpr(self.const + other, self.terms)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return LinExpr(self.const + other.const, out)

    def __sub__(self, other):
        if isinstance(other, int):
            return LinExpr(self.const - other, self.terms)
        return self + other.scaled(-1)

    def scaled(self, factor: int):
        return LinExpr(self.const * factor,
                       {k: v * factor for k, v in self.terms.items()})

    @property
    def is_const(self) -> bool:
        return not self.terms

    def bounds(self, box: dict[str, tuple[float, float]]) -> tuple[float, float]:
        lo = hi = self.const
        for name, coef in self.terms.items():
            vlo, vhi = box[name]
            lo += coef * (vlo if coef > 0 else vhi)
            hi += coef * (vhi if coef > 0 else vlo)
        return lo, hi


@dataclass(frozen=True)
class _Instant:
    label: str
    expr: LinExpr
    kind: str   # "arr" or "dead"


class Encoder:
    """Accumulates one resource's (or one system's) encoding."""

    def __init__(self, m_big: float | None = None, epsilon: float | None = None,
                 scale_hint: float = 1.0):
        self.variables: list[Variable] = []
        self._names: set[str] = set()
        self.constraints: list[Constraint] = []
        self.indicator_defs: list[IndicatorDef] = []
        self.clamp_defs: list[ClampDef] = []
        self.objective = None
        self._scale_hint = scale_hint
        self._m_big = m_big
        self._epsilon = epsilon
        self.param_exprs: dict[tuple[str, str], LinExpr] = {}

    def finished(self, meta=None) -> MilpInstance:
        m, eps = self._money()
        inst = MilpInstance(tuple(self.variables), tuple(self.constraints),
                            self.objective, m, eps,
                            tuple(self.indicator_defs), tuple(self.clamp_defs),
                            dict(meta or {}))
        inst.check()
        return inst

    def _money(self):
        if self._m_big is None or self._epsilon is None:
            m, eps = choose_big_m_epsilon(self._scale_hint)
            if self._m_big is None:
                self._m_big = m
            if self._epsilon is None:
                self._epsilon = eps
        return self._m_big, self._epsilon

    def bump_scale(self, scale: float):
        self._scale_hint = max(self._scale_hint, scale)

    def add_var(self, name: str, kind: str, lb, ub) -> str:
        if name in self._names:
            raise MilpError(f"duplicate variable {name!r}")
        if lb is None or ub is None or ub == math.inf:
            raise MilpError(f"variable {name!r} has unbounded domain")
        if lb > ub:
            raise MilpError(f"variable {name!r} has empty domain [{lb}, {ub}]")
        self._names.add(name)
        self.variables.append(Variable(name, kind, lb, ub))
        return name

    def has_var(self, name: str) -> bool:
        return name in self._names

    def add_le(self, name: str, expr: LinExpr, rhs=0):
        """expr <= rhs, with the expression constant folded to the right."""
        self.constraints.append(Constraint(
            name, tuple((c, v) for v, c in expr.terms.items() if c != 0),
            LE, rhs - expr.const))

    def add_eq(self, name: str, expr: LinExpr, rhs=0):
        self.constraints.append(Constraint(
            name, tuple((c, v) for v, c in expr.terms.items() if c != 0),
            EQ, rhs - expr.const))

    # parameter plumbing ----------------------------------------------------

    def param(self, task: SecureTask, field: str,
              free: dict[str, dict[str, tuple[int, int]]],
              resource: str = "") -> LinExpr:
        """Expression for a task parameter: shared variable or constant."""
        key = (task.id, field)
        if key in self.param_exprs:
            return self.param_exprs[key]
        spec = free.get(task.id, {}).get(field)
        if spec is None:
            value = getattr(task, field)
            if value is None:
                raise MilpError(f"task {task.id} has no value and no domain "
                                f"for {field}")
            expr = LinExpr(value)
        else:
            lb, ub = spec
            if field == "d":
                lb = max(1, lb)     # zero-length deadline guard
            name = self.add_var(f"{field}__{_safe(task.id)}", INTEGER, lb, ub)
            expr = LinExpr(0, {name: 1})
        self.param_exprs[key] = expr
        return expr

    def bind_param(self, task_id: str, field: str, expr: LinExpr):
        self.param_exprs[(task_id, field)] = expr

    # demand machinery ------------------------------------------------------

    def _indicator(self, name: str, expr_ge0: LinExpr) -> str:
        """Binary var with var = 1 <=> expr_ge0 >= 0 (big-M linearized)."""
        m, eps = self._money()
        var = self.add_var(name, BINARY, 0, 1)
        # var = 1 forces expr >= 0
        neg = expr_ge0.scaled(-1)
        neg.terms[var] = neg.terms.get(var, 0) + m
        self.add_le(f"{name}__on", neg, m)
        # var = 0 forces expr <= -1 (strict, epsilon-converted)
        pos = LinExpr(expr_ge0.const, expr_ge0.terms)
        pos.terms[var] = pos.terms.get(var, 0) - m
        self.add_le(f"{name}__off", pos, -eps)
        self.indicator_defs.append(IndicatorDef(
            var, expr_ge0.const,
            tuple((c, v) for v, c in expr_ge0.terms.items() if c != 0)))
        return var

    def encode_resource(self, resource: str, tasks, free, c_max: int = 0):
        """Demand condition of one resource over its variable testing sets."""
        tasks = list(tasks)
        if not tasks:
            return
        for t in tasks:
            if t.c_reg < 1 or t.c_ext < t.c_reg:
                raise MilpError(f"task {t.id} has missing or inconsistent WCETs")
        rid = _safe(resource)
        phi = {t.id: self.param(t, "phi", free) for t in tasks}
        dl = {t.id: self.param(t, "d", free) for t in tasks}
        s = {}
        for t in tasks:
            if t.l is not None:
                s[t.id] = self.param(t, "s", free)

        box = self._box()
        horizon = self._t_max_ub(tasks, phi, dl, box)
        self.bump_scale(horizon)

        arrivals: list[_Instant] = []
        deadlines: list[_Instant] = []
        for t in tasks:
            tid = _safe(t.id)
            for k in range(horizon // t.p + 1):
                arrivals.append(_Instant(f"{rid}__a__{tid}__{k}",
                                          phi[t.id] + k * t.p, "arr"))
                deadlines.append(_Instant(f"{rid}__d__{tid}__{k}",
                                           phi[t.id] + dl[t.id] + k * t.p, "dead"))

        # per-frame indicators at the instants where each family is consumed
        dead_ind: dict[str, list[list[str]]] = {}
        rel_ind: dict[str, list[list[str]]] = {}
        dead_ext: dict[str, list[list[list[str]]]] = {}
        rel_ext: dict[str, list[list[list[str]]]] = {}
        for t in tasks:
            tid = _safe(t.id)
            n_reg = horizon // t.p + 1
            frames = [(phi[t.id] + h * t.p, phi[t.id] + dl[t.id] + h * t.p)
                      for h in range(n_reg)]
            dead_ind[t.id] = [
                [self._indicator(f"b__{q.label}__h{h}", q.expr - fdl)
                 for h, (_, fdl) in enumerate(frames)]
                for q in deadlines]
            rel_ind[t.id] = [
                [self._indicator(f"br__{q.label}__h{h}", farr - q.expr)
                 for h, (farr, _) in enumerate(frames)]
                for q in arrivals]
            if t.l is None or t.delta_c == 0:
                continue
            lp = t.l * t.p
            n_blk = horizon // lp + 1
            dead_ext[t.id] = []
            rel_ext[t.id] = []
            for m in range(t.f):
                base = phi[t.id] + s[t.id].scaled(t.p) + m * t.p
                blocks = [(base + j * lp, base + dl[t.id] + j * lp)
                          for j in range(n_blk)]
                dead_ext[t.id].append(
                    [[self._indicator(f"a__{q.label}__j{j}__m{m}", q.expr - bdl)
                      for j, (_, bdl) in enumerate(blocks)]
                     for q in deadlines])
                rel_ext[t.id].append(
                    [[self._indicator(f"ar__{q.label}__j{j}__m{m}", barr - q.expr)
                      for j, (barr, _) in enumerate(blocks)]
                     for q in arrivals])

        m_big, _ = self._money()
        for i1, q1 in enumerate(arrivals):
            for i2, q2 in enumerate(deadlines):
                pair = f"{rid}__k{i1}_{i2}"
                e = self._indicator(f"e__{pair}", q2.expr - q1.expr)
                lhs = LinExpr(0, {e: m_big}) + q1.expr - q2.expr
                for t in tasks:
                    n_reg = horizon // t.p + 1
                    cnt = self.add_var(f"nreg__{_safe(t.id)}__{pair}",
                                       INTEGER, 0, n_reg)
                    raw = LinExpr(-n_reg)
                    for h in range(n_reg):
                        raw.terms[dead_ind[t.id][i2][h]] = 1
                        raw.terms[rel_ind[t.id][i1][h]] = \
                            raw.terms.get(rel_ind[t.id][i1][h], 0) + 1
                    low = LinExpr(raw.const, raw.terms)
                    low.terms[cnt] = -1
                    self.add_le(f"clamp__{cnt}", low, 0)
                    self.clamp_defs.append(ClampDef(
                        cnt, raw.const,
                        tuple((c, v) for v, c in raw.terms.items())))
                    lhs.terms[cnt] = t.c_reg
                    if t.l is None or t.delta_c == 0:
                        continue
                    n_blk = horizon // (t.l * t.p) + 1
                    for m in range(t.f):
                        cext = self.add_var(
                            f"next__{_safe(t.id)}__m{m}__{pair}",
                            INTEGER, 0, n_blk)
                        raw = LinExpr(-n_blk)
                        for j in range(n_blk):
                            raw.terms[dead_ext[t.id][m][i2][j]] = 1
                            nm = rel_ext[t.id][m][i1][j]
                            raw.terms[nm] = raw.terms.get(nm, 0) + 1
                        low = LinExpr(raw.const, raw.terms)
                        low.terms[cext] = -1
                        self.add_le(f"clamp__{cext}", low, 0)
                        self.clamp_defs.append(ClampDef(
                            cext, raw.const,
                            tuple((c, v) for v, c in raw.terms.items())))
                        lhs.terms[cext] = t.delta_c
                self.add_le(f"demand__{pair}", lhs, m_big - c_max)

    def _box(self) -> dict[str, tuple[float, float]]:
        return {v.name: (v.lb, v.ub) for v in self.variables}

    def _t_max_ub(self, tasks, phi, dl, box) -> int:
        ub_phi = max(int(phi[t.id].bounds(box)[1]) for t in tasks)
        ub_d = max(int(dl[t.id].bounds(box)[1]) for t in tasks)
        return ub_phi + ub_d + 2 * math.lcm(*(t.p for t in tasks))


def _normalize_free(tasks, free_params) -> dict[str, dict[str, tuple[int, int]]]:
    free_params = dict(free_params or {})
    for tid, fields in free_params.items():
        for fld in fields:
            if fld not in ("phi", "d", "s"):
                raise MilpError(f"unknown free parameter {fld!r} on {tid}")
    known = {t.id for t in tasks}
    unknown = set(free_params) - known
    if unknown:
        raise MilpError(f"free parameters for unknown tasks: {sorted(unknown)}")
    return free_params


def encode_ecu(tasks_on_ecu, free_params=None, *, m_big=None, epsilon=None,
               resource: str = "ecu") -> MilpInstance:
    """Preemptive demand-condition MILP for one ECU's task set."""
    tasks = list(tasks_on_ecu)
    free = _normalize_free(tasks, free_params)
    enc = Encoder(m_big, epsilon)
    enc.encode_resource(resource, tasks, free, c_max=0)
    return enc.finished({"resource": resource, "kind": "ecu"})


def encode_network(msgs, c_max: int, free_params=None, *, m_big=None,
                   epsilon=None, resource: str = "bus") -> MilpInstance:
    """Non-preemptive variant: every window's supply loses c_max ticks."""
    msgs = list(msgs)
    free = _normalize_free(msgs, free_params)
    enc = Encoder(m_big, epsilon)
    enc.encode_resource(resource, msgs, free, c_max=c_max)
    return enc.finished({"resource": resource, "kind": "network", "c_max": c_max})


def encode_system(system, free_params=None, *, m_big=None, epsilon=None,
                  end_to_end_equality: bool = True) -> MilpInstance:
    """Unified encoding: all ECUs, the bus, precedence and deadline coupling.

    Sensing and derived message/control authentication offsets share one
    variable per transaction, displaced by f - 1.
    """
    tasks = system.all_tasks()
    free = _normalize_free(tasks, free_params)
    enc = Encoder(m_big, epsilon)

    for tx in system.transactions:
        sens_free = free.get(tx.sens.id, {})
        if "s" in sens_free:
            s_expr = LinExpr(0, {enc.add_var(f"s__{_safe(tx.sens.id)}", INTEGER,
                                             *sens_free["s"]): 1})
        elif tx.sens.s is not None:
            s_expr = LinExpr(tx.sens.s)
        else:
            s_expr = None
        if s_expr is not None:
            enc.bind_param(tx.sens.id, "s", s_expr)
            enc.bind_param(tx.net.id, "s", s_expr + (tx.policy.f - 1))
            enc.bind_param(tx.ctrl.id, "s", s_expr + (tx.policy.f - 1))

    for ecu_id in system.ecu_ids():
        enc.encode_resource(ecu_id, system.tasks_on(ecu_id), free, c_max=0)
    msgs = system.messages()
    if msgs:
        c_max = max(max(m.c_ext for m in msgs), system.c_max_nrt)
        enc.encode_resource("bus", msgs, free, c_max=c_max)

    for tx in system.transactions:
        tag = _safe(tx.id)
        phi_s = enc.param(tx.sens, "phi", free)
        d_s = enc.param(tx.sens, "d", free)
        phi_n = enc.param(tx.net, "phi", free)
        d_n = enc.param(tx.net, "d", free)
        phi_c = enc.param(tx.ctrl, "phi", free)
        d_c = enc.param(tx.ctrl, "d", free)
        shift = tx.p if tx.pipelined else 0
        enc.add_le(f"prec_sens_net__{tag}", phi_s + d_s - phi_n - shift, 0)
        enc.add_le(f"prec_net_ctrl__{tag}", phi_n + d_n - phi_c, 0)
        enc.add_le(f"prec_ctrl_period__{tag}", phi_c + d_c, tx.p)
        if tx.pipelined:
            enc.add_le(f"prec_sens_period__{tag}", phi_s + d_s, tx.p)
        deadline_vars = [v for v, t in ((d_s, tx.sens), (d_n, tx.net),
                                        (d_c, tx.ctrl))
                         if not v.is_const]
        if end_to_end_equality and not tx.pipelined and len(deadline_vars) == 3:
            enc.add_eq(f"e2e__{tag}", d_s + d_n + d_c, tx.p)

    return enc.finished({"kind": "system"})


def _interval(const, terms, box, fixed):
    lo = hi = const
    for coef, name in terms:
        if name in fixed:
            lo += coef * fixed[name]
            hi += coef * fixed[name]
        else:
            vlo, vhi = box[name]
            lo += coef * (vlo if coef > 0 else vhi)
            hi += coef * (vhi if coef > 0 else vlo)
    return lo, hi


def prune(instance: MilpInstance) -> MilpInstance:
    """Eliminate indicator and counter variables forced by parameter bounds.

    A frame whose window lies entirely on one side of a testing instant has
    its indicator pinned; counters whose signed count is decided follow; the
    feasible set over the remaining variables is unchanged.  Vacuously true
    rows are dropped; violated constant rows are kept as infeasibility
    markers.
    """
    box = {v.name: (v.lb, v.ub) for v in instance.variables}
    fixed: dict[str, float] = {}
    pruned = {"indicators": 0, "counters": 0, "constraints": 0}

    changed = True
    while changed:
        changed = False
        for idef in instance.indicator_defs:
            if idef.var in fixed:
                continue
            lo, hi = _interval(idef.const, idef.terms, box, fixed)
            if lo >= 0:
                fixed[idef.var] = 1
            elif hi < 0:
                fixed[idef.var] = 0
            else:
                continue
            pruned["indicators"] += 1
            changed = True
        for cdef in instance.clamp_defs:
            if cdef.var in fixed:
                continue
            lo, hi = _interval(cdef.const, cdef.terms, box, fixed)
            if lo == hi:
                fixed[cdef.var] = max(0, lo)
                pruned["counters"] += 1
                changed = True

    new_constraints: list[Constraint] = []
    for c in instance.constraints:
        const_shift = 0.0
        terms = []
        for coef, name in c.terms:
            if name in fixed:
                const_shift += coef * fixed[name]
            else:
                terms.append((coef, name))
        rhs = c.rhs - const_shift
        if terms:
            lo, hi = _interval(0, terms, box, fixed)
            vacuous = (c.sense == LE and hi <= rhs) or \
                      (c.sense == GE and lo >= rhs) or \
                      (c.sense == EQ and lo == hi == rhs)
            if vacuous:
                pruned["constraints"] += 1
                continue
        else:
            ok = (0 <= rhs + 1e-9 if c.sense == LE else
                  0 >= rhs - 1e-9 if c.sense == GE else
                  abs(rhs) <= 1e-9)
            if ok:
                pruned["constraints"] += 1
                continue
        new_constraints.append(Constraint(c.name, tuple(terms), c.sense, rhs))

    referenced = {name for c in new_constraints for _, name in c.terms}
    if instance.objective:
        referenced |= {name for _, name in instance.objective[1]}
    new_vars = tuple(v for v in instance.variables
                     if v.name not in fixed and v.name in referenced)
    kept = {v.name for v in new_vars}

    def fold_def(d):
        const = d.const
        terms = []
        for coef, name in d.terms:
            if name in fixed:
                const += coef * fixed[name]
            elif name in kept:
                terms.append((coef, name))
            else:
                return None
        return type(d)(d.var, const, tuple(terms))

    new_idefs = tuple(f for f in (fold_def(d) for d in instance.indicator_defs
                                  if d.var in kept) if f is not None)
    new_cdefs = tuple(f for f in (fold_def(d) for d in instance.clamp_defs
                                  if d.var in kept) if f is not None)
    meta = dict(instance.meta)
    meta["pruned"] = pruned
    meta["fixed"] = {k: v for k, v in sorted(fixed.items())}
    from dataclasses import replace as dreplace
    return dreplace(instance, variables=new_vars,
                    constraints=tuple(new_constraints),
                    indicator_defs=new_idefs, clamp_defs=new_cdefs, meta=meta)
