"""Feasibility synthesis of offsets, deadlines and authentication offsets.

The primary backend is an exact depth-first search over the free integer
parameters with bounds propagation over the precedence constraints and the
demand tests as the feasibility oracle; the big-M encoding is exported for
external solvers rather than solved in-process.  Deadline coordinates are
handled with binary search where feasibility is provably monotone in them.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

from ..demand import (AnalysisError, SCHEDULABLE, analyze_system,
                      edf_nonpreemptive_schedulable, edf_preemptive_schedulable)
from ..model import ModelError, SecureTask, SystemModel
from .instance import MilpError, MilpInstance

FEASIBLE = "FEASIBLE"
INFEASIBLE = "INFEASIBLE"
TIMEOUT = "TIMEOUT"

NETWORK_FIRST = "network_first"
ECU_FIRST = "ecu_first"


class SynthesisError(ValueError):
    """Raised for malformed synthesis requests."""


class _Expired(Exception):
    pass


@dataclass(frozen=True)
class SearchLimits:
    max_nodes: int | None = None
    max_seconds: float | None = None


class _Clock:
    def __init__(self, limits: SearchLimits):
        self.t0 = time.monotonic()
        self.limits = limits
        self.nodes = 0
        self.probes = 0

    def node(self):
        self.nodes += 1
        if self.limits.max_nodes is not None and self.nodes > self.limits.max_nodes:
            raise _Expired
        if (self.limits.max_seconds is not None
                and time.monotonic() - self.t0 > self.limits.max_seconds):
            raise _Expired

    def elapsed(self) -> float:
        return time.monotonic() - self.t0


@dataclass
class SynthesisResult:
    status: str
    assignment: dict[str, dict[str, int]] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    stage: str | None = None
    system: SystemModel | None = None

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


# ---------------------------------------------------------------------------
# generic exact search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchVar:
    key: tuple            # ("s", tx_id) | ("phi", task_id) | ("d", task_id)
    lb: int
    ub: int
    step: int = 1

    def values(self, lo, hi):
        v = self.lb
        while v < lo:
            v += self.step
        while v <= hi:
            yield v
            v += self.step


@dataclass(frozen=True)
class SearchProblem:
    system: SystemModel
    variables: tuple[SearchVar, ...]
    # linear rows: sum(coef * var) <= rhs with fixed parts folded into rhs
    rows: tuple[tuple[tuple[tuple[int, tuple], ...], int], ...]

    def var(self, key):
        for v in self.variables:
            if v.key == key:
                return v
        raise SynthesisError(f"unknown search variable {key}")


def _granular_step(granularity: str, tasks) -> int:
    if granularity == "tick":
        return 1
    if granularity == "period":
        import math
        return math.gcd(*(t.p for t in tasks))
    raise SynthesisError(f"unknown granularity {granularity!r}")


def search_problem(system: SystemModel, free=None, *, granularity: str = "tick",
                   e2e_equality: bool | None = None) -> SearchProblem:
    """Search form of the synthesis: free variables and linear couplings.

    ``free`` maps task ids to the parameter names left to the solver; the
    default frees exactly the unset parameters of transaction tasks.  The
    end-to-end deadline equality is imposed whenever a transaction has all
    three deadlines in scope (and is not pipelined), matching the unified
    encoding.
    """
    step = _granular_step(granularity, system.all_tasks())
    variables: list[SearchVar] = []
    rows: list = []

    def wants(task: SecureTask, fld: str) -> bool:
        if free is not None:
            return fld in free.get(task.id, ())
        return getattr(task, fld) is None

    svars, pvars, dvars = [], [], []
    for tx in sorted(system.transactions, key=lambda t: t.id):
        if wants(tx.sens, "s"):
            svars.append(SearchVar(("s", tx.id), 0, tx.policy.l - tx.policy.f))
        chain = [("sens", tx.sens), ("net", tx.net), ("ctrl", tx.ctrl)]
        for _, task in chain:
            if wants(task, "phi"):
                pvars.append(SearchVar(("phi", task.id), 0, tx.p - 1, step))
            if wants(task, "d"):
                dvars.append(SearchVar(("d", task.id), 1, tx.p, step))

        def term(fld, task, coef=1):
            if any(v.key == (fld, task.id) for v in pvars + dvars):
                return [(coef, (fld, task.id))], 0
            value = getattr(task, fld)
            if value is None:
                raise SynthesisError(f"{task.id}.{fld} neither set nor free")
            return [], coef * value

        def row(parts, rhs):
            terms: list = []
            const = 0
            for fld, task, coef in parts:
                t, c = term(fld, task, coef)
                terms += t
                const += c
            rows.append((tuple(terms), rhs - const))

        shift = tx.p if tx.pipelined else 0
        row([("phi", tx.sens, 1), ("d", tx.sens, 1), ("phi", tx.net, -1)], shift)
        row([("phi", tx.net, 1), ("d", tx.net, 1), ("phi", tx.ctrl, -1)], 0)
        row([("phi", tx.ctrl, 1), ("d", tx.ctrl, 1)], tx.p)
        if tx.pipelined:
            row([("phi", tx.sens, 1), ("d", tx.sens, 1)], tx.p)
        all_d_free = all(wants(t, "d") for t in (tx.sens, tx.net, tx.ctrl))
        use_e2e = e2e_equality if e2e_equality is not None else all_d_free
        if use_e2e and all_d_free and not tx.pipelined:
            row([("d", tx.sens, 1), ("d", tx.net, 1), ("d", tx.ctrl, 1)], tx.p)
            row([("d", tx.sens, -1), ("d", tx.net, -1), ("d", tx.ctrl, -1)], -tx.p)

    for t in system.background:
        if t.phi is None or t.d is None:
            raise SynthesisError(f"background task {t.id} is incomplete")

    variables = svars + pvars + dvars
    return SearchProblem(system, tuple(variables), tuple(rows))


def _propagate(problem: SearchProblem, domains: dict) -> bool:
    """Bounds consistency over the linear rows; False on a wiped domain."""
    changed = True
    while changed:
        changed = False
        for terms, rhs in problem.rows:
            lo_sum = 0
            parts = []
            for coef, key in terms:
                lo, hi = domains[key]
                low = coef * (lo if coef > 0 else hi)
                parts.append((coef, key, low))
                lo_sum += low
            if lo_sum > rhs:
                return False
            for coef, key, low in parts:
                rest = lo_sum - low
                lo, hi = domains[key]
                if coef > 0:
                    cap = (rhs - rest) // coef
                    if cap < hi:
                        domains[key] = (lo, cap)
                        if lo > cap:
                            return False
                        changed = True
                else:
                    floor_v = -((rhs - rest) // (-coef))
                    if floor_v > lo:
                        domains[key] = (floor_v, hi)
                        if floor_v > hi:
                            return False
                        changed = True
    return True


class _ResourceOracle:
    """Per-resource demand verdicts over partially assigned parameters."""

    def __init__(self, system: SystemModel, variables):
        self.system = system
        keys = {v.key for v in variables}
        self._task_vars: dict[str, dict[str, tuple]] = {}
        for tx in system.transactions:
            for role, task in (("sens", tx.sens), ("net", tx.net),
                               ("ctrl", tx.ctrl)):
                fields = {}
                if ("s", tx.id) in keys and task.l is not None:
                    fields["s"] = (("s", tx.id), 0 if role == "sens"
                                   else tx.policy.f - 1)
                for fld in ("phi", "d"):
                    if (fld, task.id) in keys:
                        fields[fld] = ((fld, task.id), 0)
                if fields:
                    self._task_vars[task.id] = fields
        self.resources: list[tuple[str, tuple, frozenset]] = []
        for ecu_id in system.ecu_ids():
            tasks = tuple(system.tasks_on(ecu_id))
            self.resources.append((ecu_id, tasks, self._keys_of(tasks)))
        msgs = tuple(system.messages())
        self.resources.append(("bus", msgs, self._keys_of(msgs)))
        self._cache: dict = {}
        self.probes = 0

    def _keys_of(self, tasks) -> frozenset:
        keys = set()
        for t in tasks:
            for key, _ in self._task_vars.get(t.id, {}).values():
                keys.add(key)
        return frozenset(keys)

    def materialize(self, task: SecureTask, assignment) -> SecureTask:
        fields = self._task_vars.get(task.id)
        if not fields:
            return task
        upd = {}
        for fld, (key, offset) in fields.items():
            upd[fld] = assignment[key] + offset
        return replace(task, **upd)

    def verdict(self, name, tasks, keys, assignment):
        sig = (name, tuple(assignment[k] for k in sorted(keys)))
        hit = self._cache.get(sig)
        if hit is not None:
            return hit
        self.probes += 1
        concrete = [self.materialize(t, assignment) for t in tasks]
        if name == "bus":
            v = edf_nonpreemptive_schedulable(concrete, self.system.c_max_nrt)
        else:
            v = edf_preemptive_schedulable(concrete)
        ok = v.status == SCHEDULABLE
        if len(self._cache) < 200000:
            self._cache[sig] = ok
        return ok

    def ready_resources(self, assigned: set):
        for name, tasks, keys in self.resources:
            if keys and keys <= assigned:
                yield name, tasks, keys


def solve_feasibility(problem, limits: SearchLimits | None = None) -> SynthesisResult:
    """Exact feasibility search; returns the lexicographically smallest
    feasible (s, phi, d) assignment, INFEASIBLE after exhausting the pruned
    domain, or TIMEOUT.

    Also accepts a fully pruned constant :class:`MilpInstance`, whose
    verdict is immediate.
    """
    if isinstance(problem, MilpInstance):
        if any(True for _ in problem.variables):
            raise MilpError("an instance with free variables has no search "
                            "backend; build a search problem from the system")
        bad = problem.constant_violations()
        return SynthesisResult(FEASIBLE if not bad else INFEASIBLE,
                               stats={"violated": bad})
    limits = limits or SearchLimits()
    clock = _Clock(limits)
    system = problem.system
    oracle = _ResourceOracle(system, problem.variables)
    for name, tasks, keys in oracle.resources:
        if not keys and not oracle.verdict(name, tasks, keys, {}):
            return SynthesisResult(INFEASIBLE, stats=_stats(clock, oracle))
    order = list(problem.variables)
    domains = {v.key: (v.lb, v.ub) for v in order}
    if not _propagate(problem, domains):
        return SynthesisResult(INFEASIBLE, stats=_stats(clock, oracle))

    assignment: dict = {}
    checked: list[str] = []

    def descend(depth: int) -> bool:
        clock.node()
        if depth == len(order):
            return True
        var = order[depth]
        lo, hi = domains[var.key]
        for value in var.values(lo, hi):
            saved = dict(domains)
            domains[var.key] = (value, value)
            assignment[var.key] = value
            if _propagate(problem, domains):
                assigned = set(assignment)
                ok = True
                for name, tasks, keys in oracle.ready_resources(assigned):
                    if var.key in keys:
                        if not oracle.verdict(name, tasks, keys, assignment):
                            ok = False
                            break
                if ok and descend(depth + 1):
                    return True
            del assignment[var.key]
            domains.clear()
            domains.update(saved)
        return False

    try:
        found = descend(0)
    except _Expired:
        return SynthesisResult(TIMEOUT, stats=_stats(clock, oracle))
    if not found:
        return SynthesisResult(INFEASIBLE, stats=_stats(clock, oracle))
    task_assignment = _to_task_assignment(system, assignment)
    completed = system.with_assignment(task_assignment)
    return SynthesisResult(FEASIBLE, task_assignment, _stats(clock, oracle),
                           system=completed)


def _stats(clock, oracle):
    return {"nodes": clock.nodes, "probes": oracle.probes,
            "wall_seconds": round(clock.elapsed(), 6)}


def _to_task_assignment(system: SystemModel, assignment: dict) -> dict:
    out: dict[str, dict[str, int]] = {}
    for key, value in assignment.items():
        fld = key[0]
        if fld == "s":
            tx = next(t for t in system.transactions if t.id == key[1])
            out.setdefault(tx.sens.id, {})["s"] = value
            out.setdefault(tx.net.id, {})["s"] = value + tx.policy.f - 1
            out.setdefault(tx.ctrl.id, {})["s"] = value + tx.policy.f - 1
        else:
            out.setdefault(key[1], {})[fld] = value
    return out


# ---------------------------------------------------------------------------
# staged decomposition
# ---------------------------------------------------------------------------

def _binary_min(lo, hi, feasible_at) -> int:
    """Smallest v in [lo, hi] with feasible_at(v); hi must be feasible."""
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible_at(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


def _binary_max(lo, hi, feasible_at) -> int:
    """Largest v in [lo, hi] with feasible_at(v); lo must be feasible."""
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if feasible_at(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def _s_domains(txs):
    return [range(0, tx.policy.l - tx.policy.f + 1) for tx in txs]


def _network_stage(system, clock) -> dict | None:
    """Synchronized bus access: offsets zero, deadlines minimized, initial
    authentication offsets searched.  Returns task assignment or None."""
    txs = [tx for tx in sorted(system.transactions, key=lambda t: t.id)]
    background = [m for m in system.messages()
                  if system.transaction_of(m.id) is None]
    for m in background:
        if m.phi is None or m.d is None:
            raise SynthesisError(f"background message {m.id} is incomplete")

    free_s = [tx for tx in txs if tx.sens.s is None]
    assign: dict[str, dict[str, int]] = {}

    def message(tx, s_val, d_val):
        s_net = None if s_val is None else s_val + tx.policy.f - 1
        return replace(tx.net, phi=0, d=d_val, s=s_net)

    def probe(s_map, d_map):
        clock.node()
        msgs = background + [message(tx, s_map[tx.id], d_map[tx.id])
                             for tx in txs]
        v = edf_nonpreemptive_schedulable(msgs, system.c_max_nrt)
        return v.status == SCHEDULABLE

    def ub_d(tx):
        return tx.net.d if tx.net.d is not None else tx.p

    for combo in itertools.product(*_s_domains(free_s)):
        s_map = {tx.id: tx.sens.s for tx in txs}
        s_map.update({tx.id: v for tx, v in zip(free_s, combo)})
        d_map = {tx.id: ub_d(tx) for tx in txs}
        if not probe(s_map, d_map):
            continue
        for tx in txs:
            if tx.net.d is not None:
                continue
            def at(v, _tx=tx):
                trial = dict(d_map)
                trial[_tx.id] = v
                return probe(s_map, trial)
            d_map[tx.id] = _binary_min(1, d_map[tx.id], at)
        for tx in txs:
            entry = {"phi": 0, "d": d_map[tx.id]}
            if s_map[tx.id] is not None:
                entry["s"] = s_map[tx.id] + tx.policy.f - 1
            assign[tx.net.id] = entry
            if tx.sens.s is None:
                assign.setdefault(tx.sens.id, {})["s"] = s_map[tx.id]
                assign.setdefault(tx.ctrl.id, {})["s"] = \
                    s_map[tx.id] + tx.policy.f - 1
        return assign
    return None


def _ecu_stage_pipelined(system, clock) -> dict | None:
    """Second stage of network-first: place sensing jobs ahead of the period
    boundary and control jobs behind the message deadlines, per ECU."""
    assign: dict[str, dict[str, int]] = {}
    for ecu_id in system.ecu_ids():
        tasks = system.tasks_on(ecu_id)
        fixed = [t for t in tasks if t.phi is not None and t.d is not None]
        work = []
        for t in tasks:
            if t.phi is not None and t.d is not None:
                continue
            tx = system.transaction_of(t.id)
            if tx is None:
                raise SynthesisError(f"incomplete background task {t.id}")
            if t.kind == "sensing":
                work.append(("sens", tx, t))
            else:
                work.append(("ctrl", tx, t))
        work.sort(key=lambda w: (w[2].id,))

        def lower_phi(role, tx):
            return 0 if role == "sens" else tx.net.d

        def concrete(entries):
            out = list(fixed)
            for (role, tx, t), (phi, d) in entries.items():
                out.append(replace(t, phi=phi, d=d))
            return out

        def probe(entries):
            clock.node()
            v = edf_preemptive_schedulable(concrete(entries))
            return v.status == SCHEDULABLE

        chosen: dict = {}

        def relaxed(upto, override=None):
            entries = dict(chosen)
            for w in work[upto:]:
                role, tx, t = w
                phi = lower_phi(role, tx)
                entries[w] = (phi, max(1, tx.p - phi))
            if override:
                entries.update(override)
            return entries

        def place(i) -> bool:
            if i == len(work):
                return True
            role, tx, t = work[i]
            lo = lower_phi(role, tx)
            for phi in range(lo, tx.p):
                if not probe(relaxed(i + 1, {work[i]: (phi, tx.p - phi)})):
                    continue
                def at(v, w=work[i], _phi=phi):
                    return probe(relaxed(i + 1, {w: (_phi, v)}))
                d = _binary_min(1, tx.p - phi, at)
                chosen[work[i]] = (phi, d)
                if place(i + 1):
                    return True
                del chosen[work[i]]
            return False

        if not place(0):
            return None
        for (role, tx, t), (phi, d) in chosen.items():
            assign[t.id] = {"phi": phi, "d": d}
    return assign


def _ecu_stage_first(system, clock, weights) -> dict | None:
    """First stage of ecu-first: synchronous sensing (zero offsets), sensing
    deadlines minimized and control offsets maximized in weight order.

    The precedence chain ties each control offset to its sensing deadline,
    so there is no single most-relaxed layout to start from; a small set of
    deterministic period splits seeds the refinement instead.
    """
    txs = sorted(system.transactions,
                 key=lambda t: (-(weights or {}).get(t.plant_id or t.id, 1.0),
                                t.id))
    free_s = [tx for tx in txs if tx.sens.s is None]

    def probe(s_map, sens_d, ctrl_phi, ctrl_d):
        clock.node()
        for ecu_id in system.ecu_ids():
            tasks = []
            for t in system.tasks_on(ecu_id):
                tx = system.transaction_of(t.id)
                if tx is None:
                    tasks.append(t)
                    continue
                s_val = s_map[tx.id]
                if t.id == tx.sens.id:
                    tasks.append(replace(t, phi=0, d=sens_d[tx.id], s=s_val))
                elif t.id == tx.ctrl.id:
                    late = None if s_val is None else s_val + tx.policy.f - 1
                    tasks.append(replace(t, phi=ctrl_phi[tx.id],
                                         d=ctrl_d[tx.id], s=late))
                else:
                    tasks.append(t)
            if edf_preemptive_schedulable(tasks).status != SCHEDULABLE:
                return False
        return True

    def seed_layout(split_num, split_den):
        sens_d, ctrl_phi, ctrl_d = {}, {}, {}
        for tx in txs:
            d_s = tx.sens.d if tx.sens.d is not None else \
                max(1, min(tx.p - 2, tx.p * split_num // split_den))
            p_c = tx.ctrl.phi if tx.ctrl.phi is not None else d_s + 1
            d_c = tx.ctrl.d if tx.ctrl.d is not None else max(1, tx.p - p_c)
            sens_d[tx.id], ctrl_phi[tx.id], ctrl_d[tx.id] = d_s, p_c, d_c
        return sens_d, ctrl_phi, ctrl_d

    for combo in itertools.product(*_s_domains(free_s)):
        s_map = {tx.id: tx.sens.s for tx in txs}
        s_map.update({tx.id: v for tx, v in zip(free_s, combo)})
        for split in ((1, 2), (1, 4), (3, 4), (1, 8), (7, 8)):
            sens_d, ctrl_phi, ctrl_d = seed_layout(*split)
            if probe(s_map, sens_d, ctrl_phi, ctrl_d):
                break
        else:
            continue
        for tx in txs:
            if tx.sens.d is not None:
                continue
            def at(v, _tx=tx):
                trial = dict(sens_d)
                trial[_tx.id] = v
                return probe(s_map, trial, ctrl_phi, ctrl_d)
            sens_d[tx.id] = _binary_min(1, sens_d[tx.id], at)
        ok = True
        for tx in txs:
            if tx.ctrl.phi is not None:
                continue
            lb = max(ctrl_phi[tx.id], sens_d[tx.id] + 1)
            def at(v, _tx=tx):
                phis = dict(ctrl_phi)
                ds = dict(ctrl_d)
                phis[_tx.id] = v
                ds[_tx.id] = max(1, _tx.p - v)
                return probe(s_map, sens_d, phis, ds)
            if not at(lb):
                ok = False
                break
            best = _binary_max(lb, tx.p - 1, at)
            ctrl_phi[tx.id] = best
            ctrl_d[tx.id] = max(1, tx.p - best)
        if not ok or not probe(s_map, sens_d, ctrl_phi, ctrl_d):
            continue
        assign: dict[str, dict[str, int]] = {}
        for tx in txs:
            assign[tx.sens.id] = {"phi": 0, "d": sens_d[tx.id]}
            assign[tx.ctrl.id] = {"phi": ctrl_phi[tx.id], "d": ctrl_d[tx.id]}
            if tx.sens.s is None:
                assign[tx.sens.id]["s"] = s_map[tx.id]
                assign[tx.ctrl.id]["s"] = s_map[tx.id] + tx.policy.f - 1
        return assign
    return None


def _network_stage_second(system, clock) -> dict | None:
    """Second stage of ecu-first: message offsets/deadlines inside the gap
    left between sensing deadlines and control offsets."""
    txs = sorted(system.transactions, key=lambda t: t.id)
    background = [m for m in system.messages()
                  if system.transaction_of(m.id) is None]
    chosen: dict[str, tuple[int, int]] = {}

    def msgs_with(trial):
        out = list(background)
        for tx in txs:
            if tx.net.id in trial:
                phi, d = trial[tx.net.id]
                out.append(replace(tx.net, phi=phi, d=d))
            else:
                out.append(tx.net)
        return out

    def probe(trial):
        clock.node()
        v = edf_nonpreemptive_schedulable(msgs_with(trial), system.c_max_nrt)
        return v.status == SCHEDULABLE

    def place(i) -> bool:
        if i == len(txs):
            return True
        tx = txs[i]
        if tx.net.phi is not None and tx.net.d is not None:
            return place(i + 1)
        lo = tx.sens.phi + tx.sens.d
        hi = tx.ctrl.phi
        relaxed = {txs[j].net.id: (txs[j].sens.phi + txs[j].sens.d,
                                   max(1, txs[j].ctrl.phi - txs[j].sens.phi
                                       - txs[j].sens.d))
                   for j in range(i + 1, len(txs))
                   if txs[j].net.phi is None}
        for phi in range(lo, hi):
            trial = dict(chosen)
            trial.update(relaxed)
            trial[tx.net.id] = (phi, hi - phi)
            if not probe(trial):
                continue
            def at(v, _phi=phi):
                t2 = dict(trial)
                t2[tx.net.id] = (_phi, v)
                return probe(t2)
            d = _binary_min(1, hi - phi, at)
            chosen[tx.net.id] = (phi, d)
            if place(i + 1):
                return True
            del chosen[tx.net.id]
        return False

    if not place(0):
        return None
    return {mid: {"phi": phi, "d": d} for mid, (phi, d) in chosen.items()}


def synthesize_decomposed(system: SystemModel, strategy: str = NETWORK_FIRST,
                          limits: SearchLimits | None = None,
                          weights: dict | None = None) -> SynthesisResult:
    """Two-stage synthesis; stage one's parameters are frozen into stage two
    (no backtracking across stages)."""
    limits = limits or SearchLimits()
    clock = _Clock(limits)
    stages: list[str] = []

    if strategy == NETWORK_FIRST:
        offending = [tx.id for tx in system.transactions
                     if tx.net.phi not in (None, 0)]
        if offending:
            raise SynthesisError("network_first requires zero message offsets; "
                                 f"set on {', '.join(offending)}")
        system = replace(system, transactions=tuple(
            replace(tx, pipelined=True) for tx in system.transactions))
        plan = (("network", _network_stage, ()),
                ("ecu", _ecu_stage_pipelined, ()))
    elif strategy == ECU_FIRST:
        offending = [tx.id for tx in system.transactions
                     if tx.sens.phi not in (None, 0)]
        if offending:
            raise SynthesisError("ecu_first requires zero sensing offsets; "
                                 f"set on {', '.join(offending)}")
        plan = (("ecu", _ecu_stage_first, (weights,)),
                ("network", _network_stage_second, ()))
    else:
        raise SynthesisError(f"unknown strategy {strategy!r}")

    current = system
    assignment: dict[str, dict[str, int]] = {}
    for stage_name, fn, extra in plan:
        stages.append(stage_name)
        try:
            stage_assign = fn(current, clock, *extra)
        except _Expired:
            return SynthesisResult(TIMEOUT, assignment,
                                   _stage_stats(clock, stages), stage_name)
        if stage_assign is None:
            return SynthesisResult(INFEASIBLE, assignment,
                                   _stage_stats(clock, stages), stage_name)
        for tid, fields in stage_assign.items():
            assignment.setdefault(tid, {}).update(fields)
        current = current.with_assignment(stage_assign)

    verdicts = analyze_system(current)
    if not all(v.status == SCHEDULABLE for v in verdicts.values()):
        return SynthesisResult(INFEASIBLE, assignment,
                               _stage_stats(clock, stages), "re-verify")
    return SynthesisResult(FEASIBLE, assignment, _stage_stats(clock, stages),
                           system=current)


def _stage_stats(clock, stages):
    return {"nodes": clock.nodes, "wall_seconds": round(clock.elapsed(), 6),
            "stages": list(stages)}
