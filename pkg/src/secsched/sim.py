"""Deterministic EDF simulators: preemptive per ECU, non-preemptive bus.

Traces are the ground truth every analysis and synthesis result is checked
against.  Jobs are never aborted on a miss; the miss event is recorded at
the absolute deadline and the job completes late, so overloads remain
observable for as long as the caller wants to look.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass

from .model import ModelError, SecureTask

RELEASE = "release"
START = "start"
PREEMPT = "preempt"
RESUME = "resume"
COMPLETE = "complete"
DEADLINE_MISS = "deadline_miss"

_INF = float("inf")


@dataclass(frozen=True)
class TraceEvent:
    time: int
    task: str
    kind: str


@dataclass(frozen=True)
class Trace:
    events: tuple[TraceEvent, ...]
    horizon: int

    def misses(self, within: int | None = None) -> list[TraceEvent]:
        limit = self.horizon if within is None else within
        return [e for e in self.events
                if e.kind == DEADLINE_MISS and e.time <= limit]

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]

    def times(self, task: str, kind: str) -> list[int]:
        return [e.time for e in self.events if e.task == task and e.kind == kind]

    def busy_intervals(self) -> list[tuple[int, int]]:
        """Maximal intervals during which some job is running."""
        depth = 0
        start = None
        out = []
        for e in sorted(self.events, key=lambda ev: ev.time):
            if e.kind in (START, RESUME):
                if depth == 0:
                    start = e.time
                depth += 1
            elif e.kind in (COMPLETE, PREEMPT):
                depth -= 1
                if depth == 0 and e.time > start:
                    out.append((start, e.time))
        merged = []
        for a, b in out:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        return merged

    def idle_intervals(self, upto: int | None = None) -> list[tuple[int, int]]:
        end = self.horizon if upto is None else upto
        busy = self.busy_intervals()
        out = []
        cursor = 0
        for a, b in busy:
            if a > cursor:
                out.append((cursor, min(a, end)))
            cursor = max(cursor, b)
            if cursor >= end:
                break
        if cursor < end:
            out.append((cursor, end))
        return [(a, b) for a, b in out if a < b]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "task", "event"])
        for e in self.events:
            writer.writerow([e.time, e.task, e.kind])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "horizon": self.horizon,
            "events": [[e.time, e.task, e.kind] for e in self.events],
        }, separators=(",", ":"))


@dataclass(frozen=True)
class OneShotJob:
    """A single extra arrival (sporadic frame, opportunistic MAC, ...).

    ``deadline`` None means background priority: the job runs only when no
    deadline-constrained work is pending and never produces miss events.
    """

    id: str
    release: int
    cost: int
    deadline: int | None = None


class _Job:
    __slots__ = ("task", "release", "deadline", "remaining", "started", "seq",
                 "tracked")

    def __init__(self, task_id, release, deadline, cost, seq, tracked):
        self.task = task_id
        self.release = release
        self.deadline = deadline
        self.remaining = cost
        self.started = False
        self.seq = seq
        self.tracked = tracked

    def key(self):
        return (self.deadline, self.task, self.release, self.seq)


def _periodic_jobs(tasks, horizon):
    for t in tasks:
        if t.phi is None or t.d is None:
            raise ModelError(f"task {t.id} has unset offset or deadline")
        if t.l is not None and t.s is None:
            raise ModelError(f"task {t.id} has unset authentication offset")
        n = 0
        while t.phi + n * t.p < horizon:
            rel = t.phi + n * t.p
            cost = t.c_reg + (t.delta_c if t.is_extended_period(n) else 0)
            yield _Job(t.id, rel, rel + t.d, cost, n, True)
            n += 1


def _gather_jobs(tasks, horizon, extra_jobs):
    jobs = list(_periodic_jobs(tasks, horizon))
    for i, j in enumerate(extra_jobs):
        dl = _INF if j.deadline is None else j.deadline
        jobs.append(_Job(j.id, j.release, dl, j.cost, i, j.deadline is not None))
    jobs.sort(key=lambda jb: (jb.release, jb.task, jb.seq))
    return jobs


def _simulate(tasks, horizon, extra_jobs, preemptive):
    jobs = _gather_jobs(tasks, horizon, extra_jobs)
    events: list[TraceEvent] = []
    ready: list = []
    misses: list = []          # (deadline, tiebreak, job) for incomplete jobs
    running: _Job | None = None
    finish_at = 0
    idx = 0
    now = 0
    counter = 0

    def queue_push(job):
        nonlocal counter
        heapq.heappush(ready, (job.key(), counter, job))
        counter += 1

    def watch_deadline(job):
        nonlocal counter
        if job.deadline is not _INF:
            heapq.heappush(misses, (job.deadline, counter, job))
            counter += 1

    while True:
        candidates = []
        if running is not None:
            candidates.append(finish_at)
        if idx < len(jobs):
            candidates.append(jobs[idx].release)
        while misses and misses[0][2].remaining == 0:
            heapq.heappop(misses)
        if misses:
            candidates.append(misses[0][0])
        if not candidates:
            break
        now = min(candidates)

        if running is not None and finish_at == now:
            running.remaining = 0
            events.append(TraceEvent(now, running.task, COMPLETE))
            running = None

        while misses and misses[0][2].remaining == 0:
            heapq.heappop(misses)
        while misses and misses[0][0] == now:
            _, _, job = heapq.heappop(misses)
            if job.remaining > 0:
                events.append(TraceEvent(now, job.task, DEADLINE_MISS))

        while idx < len(jobs) and jobs[idx].release == now:
            job = jobs[idx]
            idx += 1
            events.append(TraceEvent(now, job.task, RELEASE))
            queue_push(job)
            watch_deadline(job)

        if running is None:
            if ready:
                _, _, job = heapq.heappop(ready)
                events.append(TraceEvent(now, job.task,
                                         RESUME if job.started else START))
                job.started = True
                running = job
                finish_at = now + job.remaining
        elif preemptive and ready and ready[0][0] < running.key():
            _, _, job = heapq.heappop(ready)
            running.remaining = finish_at - now
            events.append(TraceEvent(now, running.task, PREEMPT))
            queue_push(running)
            events.append(TraceEvent(now, job.task,
                                     RESUME if job.started else START))
            job.started = True
            running = job
            finish_at = now + job.remaining

    return Trace(tuple(events), horizon)


def simulate_ecu(tasks, horizon: int, extra_jobs=()) -> Trace:
    """Preemptive EDF from a synchronous start; ties go to the lower task id."""
    return _simulate(list(tasks), horizon, tuple(extra_jobs), preemptive=True)


def simulate_network(msgs, horizon: int, extra_jobs=()) -> Trace:
    """Non-preemptive EDF: the pending message with the earliest absolute
    deadline starts at each idle instant and transmits to completion."""
    return _simulate(list(msgs), horizon, tuple(extra_jobs), preemptive=False)


@dataclass(frozen=True)
class TimingViolation:
    transaction: str
    job: int
    check: str
    detail: str


@dataclass(frozen=True)
class TimingReport:
    violations: tuple[TimingViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_transaction_timing(system, ecu_traces: dict[str, Trace],
                             bus_trace: Trace) -> TimingReport:
    """Verify per-job precedence and end-to-end bounds against traces.

    For pipelined transactions the sensing job of period k feeds the message
    of period k+1, so the first message/control job is a bootstrap carrying
    no checked payload.
    """
    out: list[TimingViolation] = []

    def series(trace, task_id, kind):
        return trace.times(task_id, kind)

    for tx in system.transactions:
        sens_trace = ecu_traces[system.ecu_of(tx.sens.id)]
        ctrl_trace = ecu_traces[system.ecu_of(tx.ctrl.id)]
        s_done = series(sens_trace, tx.sens.id, COMPLETE)
        n_rel = series(bus_trace, tx.net.id, RELEASE)
        n_done = series(bus_trace, tx.net.id, COMPLETE)
        c_rel = series(ctrl_trace, tx.ctrl.id, RELEASE)
        c_done = series(ctrl_trace, tx.ctrl.id, COMPLETE)
        s_rel = series(sens_trace, tx.sens.id, RELEASE)
        shift = 1 if tx.pipelined else 0

        for k in range(min(len(s_done), max(0, len(n_rel) - shift))):
            if s_done[k] > n_rel[k + shift]:
                out.append(TimingViolation(
                    tx.id, k, "sensing->message",
                    f"sensing completes at {s_done[k]} after message release "
                    f"{n_rel[k + shift]}"))
        for k in range(shift, min(len(n_done), len(c_rel))):
            if n_done[k] > c_rel[k]:
                out.append(TimingViolation(
                    tx.id, k, "message->control",
                    f"message completes at {n_done[k]} after control release "
                    f"{c_rel[k]}"))
        for k in range(len(c_done)):
            boundary = (k + 1) * tx.p
            if c_done[k] > boundary:
                out.append(TimingViolation(
                    tx.id, k, "control-deadline",
                    f"control completes at {c_done[k]} after {boundary}"))
            src = k - shift
            if 0 <= src < len(s_rel):
                bound = s_rel[src] + tx.end_to_end_bound
                if c_done[k] > bound:
                    out.append(TimingViolation(
                        tx.id, k, "end-to-end",
                        f"actuation at {c_done[k]} exceeds sampling bound {bound}"))
    return TimingReport(tuple(out))
