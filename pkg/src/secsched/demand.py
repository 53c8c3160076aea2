"""Demand-based EDF schedulability tests for security-aware tasks.

The exact preemptive test checks the processor demand condition over all
arrival/deadline testing pairs up to the analysis horizon; the bus test is
the sufficient non-preemptive variant with the blocking term subtracted from
the supply.  Both are evaluated with an O((jobs + arrivals) log arrivals)
sweep instead of the quadratic pair loop, which matters once hyperperiods
reach tens of thousands of ticks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .model import ModelError, SecureTask, hyperperiod, t_max

SCHEDULABLE = "SCHEDULABLE"
REJECTED = "REJECTED"
NOT_SCHEDULABLE = "NOT_SCHEDULABLE"


class AnalysisError(ValueError):
    """Raised when an analysis is asked about an under-specified task set."""


@dataclass(frozen=True)
class Interval:
    t1: int
    t2: int

    def __post_init__(self):
        if self.t1 >= self.t2:
            raise AnalysisError(f"demand interval needs t1 < t2, got "
                                f"[{self.t1}, {self.t2}]")


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: Interval | None = None
    demand: int | None = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SCHEDULABLE

    def summary(self) -> str:
        if self.witness is None:
            return f"{self.status}" + (f" ({self.reason})" if self.reason else "")
        return (f"{self.status}: demand {self.demand} over "
                f"[{self.witness.t1}, {self.witness.t2}]")


def _require_params(tasks, need_s=True):
    for t in tasks:
        if t.phi is None or t.d is None:
            raise AnalysisError(f"task {t.id} has unset offset or deadline")
        if need_s and t.l is not None and t.s is None:
            raise AnalysisError(f"task {t.id} has unset authentication offset")


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def count_regular(task: SecureTask, iv: Interval) -> int:
    """Jobs of ``task`` with arrival >= t1 and deadline <= t2."""
    _require_params([task], need_s=False)
    hi = (iv.t2 - task.phi - task.d) // task.p
    lo = max(0, _ceil_div(iv.t1 - task.phi, task.p))
    return max(0, hi - lo + 1)


def count_extended(task: SecureTask, iv: Interval) -> int:
    """Extended frames of ``task`` contained in the interval.

    The m-th frame of the j-th block arrives at phi + (s + m + j*l)*p; the
    count is summed over the f frames of a block.
    """
    if task.l is None:
        return 0
    _require_params([task])
    lp = task.l * task.p
    total = 0
    for m in range(task.f):
        off = task.phi + (task.s + m) * task.p
        hi = (iv.t2 - off - task.d) // lp
        lo = max(0, _ceil_div(iv.t1 - off, lp))
        total += max(0, hi - lo + 1)
    return total


def demand(task: SecureTask, iv: Interval) -> int:
    """Exact processor demand of ``task`` on the interval, in ticks."""
    return (task.c_reg * count_regular(task, iv)
            + task.delta_c * count_extended(task, iv))


def total_demand(tasks, iv: Interval) -> int:
    return sum(demand(t, iv) for t in tasks)


def testing_sets(tasks) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Arrival and absolute-deadline instants up to the analysis horizon."""
    tasks = list(tasks)
    if not tasks:
        raise AnalysisError("testing sets of an empty task set")
    _require_params(tasks, need_s=False)
    horizon = t_max(tasks)
    arr: set[int] = set()
    dead: set[int] = set()
    for t in tasks:
        k = 0
        while t.phi + k * t.p <= horizon:
            arr.add(t.phi + k * t.p)
            k += 1
        k = 0
        while t.phi + t.d + k * t.p <= horizon:
            dead.add(t.phi + t.d + k * t.p)
            k += 1
    return tuple(sorted(arr)), tuple(sorted(dead))


_SENTINEL = -(1 << 62)


class _MaxAddTree:
    """Segment tree: range add, global max.  Leaves start inactive."""

    def __init__(self, n: int):
        size = 1
        while size < max(n, 1):
            size *= 2
        self.size = size
        self.mx = [_SENTINEL] * (2 * size)
        self.add = [0] * (2 * size)

    def _apply(self, node, lo, hi, ql, qr, v):
        if qr < lo or hi < ql:
            return
        if ql <= lo and hi <= qr:
            self.add[node] += v
            self.mx[node] += v
            return
        mid = (lo + hi) // 2
        self._apply(2 * node, lo, mid, ql, qr, v)
        self._apply(2 * node + 1, mid + 1, hi, ql, qr, v)
        self.mx[node] = max(self.mx[2 * node], self.mx[2 * node + 1]) + self.add[node]

    def range_add(self, ql: int, qr: int, v: int):
        if ql <= qr:
            self._apply(1, 0, self.size - 1, ql, qr, v)

    def activate(self, i: int, base: int):
        # Past range-adds stay valid: lift the sentinel leaf up to its base.
        self._apply(1, 0, self.size - 1, i, i, base - _SENTINEL)

    def max(self) -> int:
        return self.mx[1]


def _job_stream(tasks, horizon):
    """All (deadline, arrival, cost) jobs with deadline <= horizon."""
    jobs = []
    for t in tasks:
        n = 0
        while t.phi + t.d + n * t.p <= horizon:
            arr = t.phi + n * t.p
            cost = t.c_reg + (t.delta_c if t.is_extended_period(n) else 0)
            jobs.append((arr + t.d, arr, cost))
            n += 1
    jobs.sort()
    return jobs


def _first_violation(tasks, horizon: int, slack: int) -> int | None:
    """Earliest deadline instant t2 with some arrival t1 < t2 such that
    the contained demand exceeds t2 - t1 - slack; None when none exists.
    """
    arrivals = sorted({t.phi + k * t.p for t in tasks
                       for k in range((horizon - t.phi) // t.p + 1)})
    index = {a: i for i, a in enumerate(arrivals)}
    jobs = _job_stream(tasks, horizon)
    tree = _MaxAddTree(len(arrivals))
    nxt = 0
    i = 0
    while i < len(jobs):
        dl = jobs[i][0]
        while nxt < len(arrivals) and arrivals[nxt] < dl:
            tree.activate(nxt, arrivals[nxt])
            nxt += 1
        while i < len(jobs) and jobs[i][0] == dl:
            _, arr, cost = jobs[i]
            tree.range_add(0, index[arr], cost)
            i += 1
        # max over active t1 of (t1 + demand) must stay within supply
        if tree.max() + slack > dl:
            return dl
    return None


def _witness_at(tasks, arrivals, t2: int, slack: int) -> tuple[Interval, int]:
    """Largest violating t1 for the given t2 (the tightest busy window)."""
    for a in reversed([a for a in arrivals if a < t2]):
        iv = Interval(a, t2)
        dem = total_demand(tasks, iv)
        if dem > t2 - a - slack:
            return iv, dem
    raise AssertionError("sweep reported a violation but none was found")


def _demand_verdict(tasks, slack: int, fail_status: str) -> Verdict:
    horizon = t_max(tasks)
    hit = _first_violation(tasks, horizon, slack)
    if hit is None:
        return Verdict(SCHEDULABLE)
    arrivals = sorted({t.phi + k * t.p for t in tasks
                       for k in range((horizon - t.phi) // t.p + 1)})
    witness, dem = _witness_at(tasks, arrivals, hit, slack)
    return Verdict(fail_status, witness, dem)


def edf_preemptive_schedulable(tasks) -> Verdict:
    """Exact preemptive-EDF verdict via the processor demand condition.

    Demand is checked for every testing-set pair up to the horizon; the
    long-run utilization pre-check catches overloads whose first violation
    would only materialize beyond it.
    """
    tasks = list(tasks)
    if not tasks:
        return Verdict(SCHEDULABLE)
    _require_params(tasks)
    verdict = _demand_verdict(tasks, 0, NOT_SCHEDULABLE)
    util = sum(t.utilization for t in tasks)
    if util > 1:
        return Verdict(NOT_SCHEDULABLE, verdict.witness, verdict.demand,
                       reason=f"utilization {float(util):.3f} exceeds 1")
    return verdict


def edf_nonpreemptive_schedulable(msgs, c_max_nrt: int = 0) -> Verdict:
    """Sufficient non-preemptive EDF test for the shared bus.

    The supply of every window is reduced by the longest frame that may
    block it (the longest message frame or non-real-time frame).  REJECTED
    means not proven schedulable, not proven infeasible.
    """
    msgs = list(msgs)
    if not msgs:
        return Verdict(SCHEDULABLE)
    _require_params(msgs)
    c_max = max(max(m.c_ext for m in msgs), c_max_nrt)
    return _demand_verdict(msgs, c_max, REJECTED)


def _thm2_core(msgs, deadlines, c_max_nrt: int) -> Verdict:
    costs = [m.c_ext for m in msgs]
    util = sum(Fraction(c, m.p) for c, m in zip(costs, msgs))
    if util > 1:
        return Verdict(NOT_SCHEDULABLE, reason="utilization exceeds 1")
    c_m = max([c_max_nrt] + costs)
    if util == 1:
        horizon = Fraction(2 * hyperperiod(msgs) + max(deadlines))
    else:
        load = c_m + sum((1 - Fraction(D, m.p)) * c
                         for D, c, m in zip(deadlines, costs, msgs))
        horizon = max(max(Fraction(D) for D in deadlines), load / (1 - util))
    points: set[int] = set()
    for D, m in zip(deadlines, msgs):
        j = 0
        while D + j * m.p <= horizon:
            points.add(D + j * m.p)
            j += 1
    for tk in sorted(points):
        dem = sum(max(0, (tk - D) // m.p + 1) * c
                  for D, c, m in zip(deadlines, costs, msgs))
        if dem + c_m > tk:
            return Verdict(NOT_SCHEDULABLE, Interval(0, tk), dem + c_m)
    return Verdict(SCHEDULABLE)


def edf_sporadic_np_schedulable(msgs, c_max_nrt: int = 0) -> Verdict:
    """Exact non-preemptive EDF test for sporadic (offset-free) messages.

    Offsets carry no meaning for sporadic arrivals; a nonzero offset on any
    message is rejected to keep this test from being misread as supporting
    transaction scheduling.
    """
    msgs = list(msgs)
    if not msgs:
        return Verdict(SCHEDULABLE)
    offending = [m.id for m in msgs if m.phi not in (None, 0)]
    if offending:
        raise AnalysisError("sporadic test does not support offsets "
                            f"(set on {', '.join(offending)})")
    for m in msgs:
        if m.d is None:
            raise AnalysisError(f"message {m.id} has unset deadline")
    return _thm2_core(msgs, [m.d for m in msgs], c_max_nrt)


def zuberi_shin_test(msgs, c_max_nrt: int = 0) -> Verdict:
    """Offset-extended legacy bus test: relative deadlines become absolute.

    Kept only because it is unsound for strictly periodic message sets with
    offsets; the recorded counterexample set passes this test yet misses a
    deadline in simulation.
    """
    msgs = list(msgs)
    if not msgs:
        return Verdict(SCHEDULABLE)
    _require_params(msgs, need_s=False)
    return _thm2_core(msgs, [m.phi + m.d for m in msgs], c_max_nrt)


def apply_jitter(tasks, jitters: dict[str, int]):
    """Fold worst-case release jitter into shortened deadlines."""
    out = []
    for t in tasks:
        j = jitters.get(t.id, 0)
        if j < 0:
            raise AnalysisError(f"negative jitter for {t.id}")
        if j == 0:
            out.append(t)
            continue
        if t.d is None:
            raise AnalysisError(f"task {t.id} has unset deadline")
        if j >= t.d:
            raise AnalysisError(f"jitter {j} of {t.id} reaches its deadline {t.d}")
        out.append(replace(t, d=t.d - j))
    return out


def analyze_system(system) -> dict[str, Verdict]:
    """Per-resource verdicts: exact test per ECU, sufficient test for the bus."""
    verdicts = {}
    for ecu_id in system.ecu_ids():
        verdicts[ecu_id] = edf_preemptive_schedulable(system.tasks_on(ecu_id))
    verdicts["bus"] = edf_nonpreemptive_schedulable(system.messages(),
                                                    system.c_max_nrt)
    return verdicts
