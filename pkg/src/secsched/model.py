"""Domain model: security-aware tasks, authentication policies, transactions.

Every time quantity in the model is an integer tick count at a system-wide
resolution, so demand arithmetic and the simulators stay exact.  A task is
described by the 7-tuple (WCET pair, period, offset, deadline, block
distance, block length, initial block offset); the last three come from the
periodic cumulative authentication policy attached to its transaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property

SENSING = "sensing"
MESSAGE = "message"
CONTROL = "control"
BACKGROUND = "background"
TASK_KINDS = (SENSING, MESSAGE, CONTROL, BACKGROUND)

_SECONDS_PER_UNIT = {"s": 1.0, "ms": 1e-3, "us": 1e-6}


class ModelError(ValueError):
    """A model object cannot be built or used as requested."""


@dataclass(frozen=True)
class Resolution:
    """Tick resolution: how many integer ticks make up one time unit."""

    ticks_per_unit: int = 10
    unit: str = "ms"

    def __post_init__(self):
        if self.ticks_per_unit < 1:
            raise ModelError("resolution must be at least one tick per unit")
        if self.unit not in _SECONDS_PER_UNIT:
            raise ModelError(f"unknown time unit {self.unit!r}")

    def ticks(self, value) -> int:
        """Convert a value in time units to ticks; must land on the grid."""
        scaled = value * self.ticks_per_unit
        rounded = round(scaled)
        if abs(scaled - rounded) > 1e-9:
            raise ModelError(f"{value} {self.unit} is not representable at "
                             f"{self.ticks_per_unit} ticks/{self.unit}")
        return int(rounded)

    def units(self, ticks: int) -> float:
        return ticks / self.ticks_per_unit

    @property
    def ticks_per_second(self) -> float:
        return self.ticks_per_unit / _SECONDS_PER_UNIT[self.unit]


@dataclass(frozen=True)
class SecureTask:
    """Periodic task or message with regular and extended frames.

    ``c_reg``/``c_ext`` are the worst-case execution (or transmission) times
    of a regular frame and of a frame carrying authentication overhead.
    ``l`` is the distance in periods between authenticated blocks, ``f`` the
    block length, ``s`` the initial block offset in periods. ``l is None``
    marks a task with no authentication duty (background or plain payload);
    such a task never releases extended frames.
    """

    id: str
    kind: str
    c_reg: int
    c_ext: int
    p: int
    phi: int | None = None
    d: int | None = None
    l: int | None = None
    f: int = 1
    s: int | None = None

    @property
    def delta_c(self) -> int:
        return self.c_ext - self.c_reg

    @property
    def is_complete(self) -> bool:
        """True when offset and deadline (and s, if authenticated) are set."""
        if self.phi is None or self.d is None:
            return False
        return self.l is None or self.s is not None

    def is_extended_period(self, n: int) -> bool:
        """Whether the job of period index ``n`` releases an extended frame."""
        if self.l is None or self.s is None:
            return False
        return n >= self.s and (n - self.s) % self.l < self.f

    @property
    def utilization(self) -> Fraction:
        """Long-run processor share including authentication overhead."""
        u = Fraction(self.c_reg, self.p)
        if self.l is not None:
            u += Fraction(self.f * self.delta_c, self.l * self.p)
        return u

    def violations(self) -> list[str]:
        out = []
        if self.kind not in TASK_KINDS:
            out.append(f"unknown kind {self.kind!r}")
        if self.p < 1:
            out.append("period below 1 tick")
        if self.c_reg < 1:
            out.append("regular frame time below 1 tick")
        if self.c_ext < self.c_reg:
            out.append("extended frame shorter than regular frame")
        if self.phi is not None and self.phi < 0:
            out.append("negative offset")
        if self.d is not None:
            if self.d < 1:
                out.append("deadline below 1 tick")
            if self.d > self.p:
                out.append("deadline exceeds period")
        if self.l is None:
            if self.c_ext != self.c_reg:
                out.append("extended frame overhead without an authentication distance")
        else:
            if self.l < 1:
                out.append("authentication distance below 1")
            elif not 1 <= self.f <= self.l:
                out.append("block length outside [1, l]")
            if self.s is not None:
                if self.s < 0:
                    out.append("negative initial authentication offset")
                elif self.s > self.l - 1:
                    out.append("s > l - 1")
                elif self.kind == SENSING and self.s > self.l - self.f:
                    out.append("s > l - f")
        return out


@dataclass(frozen=True)
class ValidationReport:
    subject: str
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_task(task: SecureTask) -> ValidationReport:
    """Check every structural task invariant; violations are report entries."""
    return ValidationReport(task.id, tuple(task.violations()))


@dataclass(frozen=True)
class AuthPolicy:
    """Periodic cumulative authentication policy (s, f, l).

    One MAC covers ``f`` consecutive measurements; blocks start every ``l``
    periods, the first one deferred by ``s`` periods.  ``s`` may be left
    unset for policies whose offset is still to be synthesized.
    """

    f: int
    l: int
    s: int | None = None

    def __post_init__(self):
        if self.l < 1:
            raise ModelError("authentication distance l must be at least 1")
        if not 1 <= self.f <= self.l:
            raise ModelError("block length f must satisfy 1 <= f <= l")
        if self.s is not None and not 0 <= self.s <= self.l - 1:
            raise ModelError("initial offset s must satisfy 0 <= s <= l - 1")


@dataclass(frozen=True)
class ControlTransaction:
    """Precedence-constrained chain sensing task -> message -> control task.

    With ``pipelined`` set, the sensing job of period k feeds the message of
    period k+1 (bus access aligned to period boundaries); otherwise the whole
    chain completes inside one period.  ``e2e_bound`` overrides the default
    sampling-to-actuation bound of one period (two when pipelined).
    """

    id: str
    p: int
    sens: SecureTask
    net: SecureTask
    ctrl: SecureTask
    policy: AuthPolicy
    plant_id: str | None = None
    pipelined: bool = False
    e2e_bound: int | None = None

    def tasks(self) -> tuple[SecureTask, SecureTask, SecureTask]:
        return (self.sens, self.net, self.ctrl)

    @property
    def end_to_end_bound(self) -> int:
        if self.e2e_bound is not None:
            return self.e2e_bound
        return 2 * self.p if self.pipelined else self.p

    def violations(self) -> list[str]:
        out = []
        for t in self.tasks():
            out.extend(f"{t.id}: {v}" for v in t.violations())
        if not (self.sens.p == self.net.p == self.ctrl.p == self.p):
            out.append("tasks do not share the transaction period")
        pol = self.policy
        if not (self.sens.l == self.net.l == self.ctrl.l == pol.l):
            out.append("authentication distance differs from policy")
        if self.sens.f != pol.f or self.net.f != 1 or self.ctrl.f != 1:
            out.append("block lengths inconsistent with cumulative policy")
        if self.sens.s is not None:
            want = self.sens.s + pol.f - 1
            if self.net.s != want or self.ctrl.s != want:
                out.append("message/control authentication offsets not s + f - 1")
        elif self.net.s is not None or self.ctrl.s is not None:
            out.append("derived authentication offsets set without sensing offset")
        out.extend(self._precedence_violations())
        return out

    def _precedence_violations(self) -> list[str]:
        sens, net, ctrl = self.tasks()
        if any(t.phi is None or t.d is None for t in self.tasks()):
            return []
        out = []
        shift = self.p if self.pipelined else 0
        if net.phi + shift < sens.phi + sens.d:
            out.append("message offset precedes sensing deadline")
        if ctrl.phi < net.phi + net.d:
            out.append("control offset precedes message deadline")
        if ctrl.phi + ctrl.d > self.p:
            out.append("control deadline crosses the period boundary")
        if self.pipelined and sens.phi + sens.d > self.p:
            out.append("sensing deadline crosses the period boundary")
        return out


def assemble_transaction(sens: SecureTask, net: SecureTask, ctrl: SecureTask,
                         policy: AuthPolicy, transaction_id: str | None = None,
                         plant_id: str | None = None, pipelined: bool = False,
                         e2e_bound: int | None = None) -> ControlTransaction:
    """Derive per-task authentication parameters from the policy.

    All three tasks share the transaction period and the policy distance l.
    Only the sensing task signs over a whole block (f frames); the message
    and the control task carry the single cumulative MAC, shifted to the end
    of the block (s + f - 1).
    """
    if not (sens.p == net.p == ctrl.p):
        raise ModelError("transaction tasks must share one period")
    s = policy.s if policy.s is not None else sens.s
    if s is not None and s > policy.l - policy.f:
        raise ModelError(f"initial offset {s} exceeds l - f = {policy.l - policy.f} "
                         "for the sensing task")
    s_late = None if s is None else s + policy.f - 1
    sens = replace(sens, kind=SENSING, l=policy.l, f=policy.f, s=s)
    net = replace(net, kind=MESSAGE, l=policy.l, f=1, s=s_late)
    ctrl = replace(ctrl, kind=CONTROL, l=policy.l, f=1, s=s_late)
    tx = ControlTransaction(
        id=transaction_id or f"tx_{sens.id}",
        p=sens.p, sens=sens, net=net, ctrl=ctrl,
        policy=AuthPolicy(f=policy.f, l=policy.l, s=s),
        plant_id=plant_id, pipelined=pipelined, e2e_bound=e2e_bound)
    bad = tx.violations()
    if bad:
        raise ModelError("; ".join(bad))
    return tx


def hyperperiod(tasks) -> int:
    periods = [t.p for t in tasks]
    if not periods:
        raise ModelError("hyperperiod of an empty task set")
    return math.lcm(*periods)


def t_max(tasks) -> int:
    """Analysis horizon: max offset + max deadline + two hyperperiods."""
    tasks = list(tasks)
    if not tasks:
        raise ModelError("t_max of an empty task set")
    for t in tasks:
        if t.phi is None or t.d is None:
            raise ModelError(f"task {t.id} has unset offset or deadline")
    return (max(t.phi for t in tasks) + max(t.d for t in tasks)
            + 2 * hyperperiod(tasks))


class QoCCurve:
    """Tabulated worst-case attack-induced estimation error J(l, f).

    Entries exist only for f <= l and, for fixed f, must be nondecreasing
    in l; the loader rejects anything else.
    """

    def __init__(self, plant_id: str, entries: dict[tuple[int, int], float]):
        self.plant_id = plant_id
        self.entries = dict(entries)
        self._check()

    def _check(self):
        by_f: dict[int, list[tuple[int, float]]] = {}
        for (l, f), j in self.entries.items():
            if f < 1 or l < f:
                raise ModelError(f"curve {self.plant_id}: entry (l={l}, f={f}) "
                                 "violates f <= l")
            if j < 0:
                raise ModelError(f"curve {self.plant_id}: negative degradation value")
            by_f.setdefault(f, []).append((l, j))
        for f, pts in by_f.items():
            pts.sort()
            for (l0, j0), (l1, j1) in zip(pts, pts[1:]):
                if j1 < j0:
                    raise ModelError(f"curve {self.plant_id}: J not nondecreasing "
                                     f"in l at f={f} (l={l0}->{l1})")

    def value(self, l: int, f: int) -> float:
        try:
            return self.entries[(l, f)]
        except KeyError:
            raise ModelError(f"curve {self.plant_id} has no entry for "
                             f"(l={l}, f={f})") from None

    def block_lengths(self) -> list[int]:
        return sorted({f for (_, f) in self.entries})

    def distances(self, f: int) -> list[int]:
        ls = sorted(l for (l, ff) in self.entries if ff == f)
        if not ls:
            raise ModelError(f"curve {self.plant_id} has no series for f={f}")
        return ls


def policy_from_qoc(curve: QoCCurve, f: int, bound: float) -> int | None:
    """Largest tabulated l with J(l, f) <= bound; None if none qualifies.

    The curve is nondecreasing in l, so this is the loosest authentication
    rate that still meets the degradation bound.
    """
    best = None
    for l in curve.distances(f):
        if curve.value(l, f) <= bound:
            best = l
    return best


@dataclass(frozen=True)
class SystemModel:
    """ECUs with mapped tasks, one shared bus, transactions and background."""

    transactions: tuple[ControlTransaction, ...]
    background: tuple[SecureTask, ...]
    ecus: tuple[tuple[str, tuple[str, ...]], ...]
    bus: tuple[str, ...]
    c_max_nrt: int = 0
    resolution: Resolution = field(default_factory=Resolution)

    @cached_property
    def _registry(self) -> dict[str, SecureTask]:
        reg: dict[str, SecureTask] = {}
        for tx in self.transactions:
            for t in tx.tasks():
                reg[t.id] = t
        for t in self.background:
            reg[t.id] = t
        return reg

    def task(self, task_id: str) -> SecureTask:
        try:
            return self._registry[task_id]
        except KeyError:
            raise ModelError(f"unknown task id {task_id!r}") from None

    def all_tasks(self) -> list[SecureTask]:
        return list(self._registry.values())

    def ecu_ids(self) -> list[str]:
        return [ecu_id for ecu_id, _ in self.ecus]

    def tasks_on(self, ecu_id: str) -> list[SecureTask]:
        for eid, ids in self.ecus:
            if eid == ecu_id:
                return [self.task(i) for i in ids]
        raise ModelError(f"unknown ECU {ecu_id!r}")

    def messages(self) -> list[SecureTask]:
        return [self.task(i) for i in self.bus]

    def ecu_of(self, task_id: str) -> str:
        for eid, ids in self.ecus:
            if task_id in ids:
                return eid
        raise ModelError(f"task {task_id!r} is not mapped to any ECU")

    def transaction_of(self, task_id: str) -> ControlTransaction | None:
        for tx in self.transactions:
            if task_id in (tx.sens.id, tx.net.id, tx.ctrl.id):
                return tx
        return None

    def violations(self) -> list[str]:
        out = []
        seen: dict[str, str] = {}
        for eid, ids in self.ecus:
            for tid in ids:
                if tid in seen:
                    out.append(f"task {tid} mapped to both {seen[tid]} and {eid}")
                seen[tid] = eid
        for tx in self.transactions:
            out.extend(f"{tx.id}: {v}" for v in tx.violations())
            for t in (tx.sens, tx.ctrl):
                if t.id not in seen:
                    out.append(f"task {t.id} is not mapped to any ECU")
            if tx.net.id not in self.bus:
                out.append(f"message {tx.net.id} is not on the bus")
            if tx.net.id in seen:
                out.append(f"message {tx.net.id} mapped to an ECU")
        for t in self.background:
            out.extend(f"{t.id}: {v}" for v in t.violations())
            on_ecu = t.id in seen
            on_bus = t.id in self.bus
            if not on_ecu and not on_bus:
                out.append(f"background task {t.id} mapped nowhere")
            if on_ecu and on_bus:
                out.append(f"background task {t.id} on both an ECU and the bus")
        for mid in self.bus:
            if self.task(mid).kind not in (MESSAGE, BACKGROUND):
                out.append(f"non-message task {mid} on the bus")
        if self.c_max_nrt < 0:
            out.append("negative non-real-time frame time")
        return out

    def with_assignment(self, assignment: dict[str, dict]) -> "SystemModel":
        """Return a copy with (phi, d, s) values from ``assignment`` applied.

        Sensing offsets propagate to the derived message/control s values so
        a partial assignment cannot desynchronize a transaction.
        """
        def patched(task: SecureTask) -> SecureTask:
            upd = assignment.get(task.id)
            if not upd:
                return task
            fields = {k: v for k, v in upd.items() if k in ("phi", "d", "s")}
            return replace(task, **fields)

        txs = []
        for tx in self.transactions:
            sens, net, ctrl = (patched(t) for t in tx.tasks())
            if sens.s is not None:
                late = sens.s + tx.policy.f - 1
                net = replace(net, s=late)
                ctrl = replace(ctrl, s=late)
            txs.append(replace(tx, sens=sens, net=net, ctrl=ctrl,
                               policy=replace(tx.policy, s=sens.s)))
        bg = tuple(patched(t) for t in self.background)
        return replace(self, transactions=tuple(txs), background=bg)
