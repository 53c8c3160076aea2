"""Synthetic automotive workload generation.

Periods follow the published benchmark distribution (separate shares for
preemptive ECU workload and the CAN bus); execution times are split with
UUniFast and rescaled so each ECU lands within two percent of its target
utilization.  Bus frames are full-size worst-case CAN frames at the given
rate, so bus utilization is steered by the background frame count rather
than by scaling transmission times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (BACKGROUND, AuthPolicy, ControlTransaction, ModelError,
                    Resolution, SecureTask, SystemModel, assemble_transaction)

# period [ms] -> share of workload
ECU_PERIOD_SHARES = {5: 0.025, 10: 0.3125, 20: 0.3125, 50: 0.0375,
                     100: 0.25, 200: 0.0125, 1000: 0.05}
BUS_PERIOD_SHARES = {5: 0.0263, 10: 0.3289, 20: 0.3289, 50: 0.0395,
                     100: 0.2632, 200: 0.0132}

CAN_PAYLOAD_BITS = 64
UTILIZATION_TOLERANCE = 0.02


class GenerationError(ValueError):
    """Targets unreachable for the requested configuration."""


def can_frame_bits(payload_bits: int) -> int:
    """Worst-case standard CAN frame length: 47 overhead bits plus payload
    plus maximal bit stuffing."""
    if payload_bits > CAN_PAYLOAD_BITS:
        raise GenerationError("payload exceeds a full-size CAN frame")
    if payload_bits < 0 or payload_bits % 8:
        raise GenerationError("payload must be a nonnegative number of bytes")
    return 47 + payload_bits + (33 + payload_bits) // 4


def frame_time(payload_bits: int, rate_bps: float,
               resolution: Resolution = Resolution()) -> int:
    """Worst-case frame duration in ticks, rounded up to the tick grid."""
    if rate_bps <= 0:
        raise GenerationError("transmission rate must be positive")
    seconds = can_frame_bits(payload_bits) / rate_bps
    return max(1, math.ceil(seconds * resolution.ticks_per_second - 1e-9))


@dataclass(frozen=True)
class GenSpec:
    n_transactions: int
    ecu_count: int = 2
    target_ecu_utilization: float = 0.5
    target_bus_utilization: float = 0.5
    bus_rate: float = 1e6
    qoc_share: float = 0.35
    l_range: tuple[int, int] = (1, 5)
    f_range: tuple[int, int] = (1, 3)
    seed: int = 0
    resolution: Resolution = field(default_factory=Resolution)

    def __post_init__(self):
        if self.n_transactions < 1 or self.ecu_count < 1:
            raise GenerationError("need at least one transaction and one ECU")
        for u in (self.target_ecu_utilization, self.target_bus_utilization):
            if not 0 < u <= 1:
                raise GenerationError("utilization targets must be in (0, 1]")
        if not 0.25 <= self.qoc_share <= 0.50:
            raise GenerationError("QoC share must lie in [0.25, 0.50]")


def _uunifast(rng, n: int, total: float) -> list[float]:
    shares = []
    remaining = total
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        shares.append(remaining - nxt)
        remaining = nxt
    shares.append(remaining)
    return shares


def _draw_period(rng, shares: dict[int, float]) -> int:
    periods = sorted(shares)
    probs = np.array([shares[p] for p in periods])
    return int(rng.choice(periods, p=probs / probs.sum()))


def _tune_ecu(tasks: list[SecureTask], target: float) -> list[SecureTask]:
    """Nudge the longest-period task until utilization is within tolerance."""
    from dataclasses import replace
    util = lambda ts: sum(t.c_reg / t.p for t in ts)
    tasks = list(tasks)
    knob = max(range(len(tasks)), key=lambda i: tasks[i].p)
    step = 1.0 / tasks[knob].p
    for _ in range(1000):
        gap = target - util(tasks)
        if abs(gap) <= UTILIZATION_TOLERANCE * 0.5:
            break
        delta = max(1, round(abs(gap) / step))
        c = tasks[knob].c_reg + (delta if gap > 0 else -delta)
        if c < 1 or c > tasks[knob].p:
            break
        t = tasks[knob]
        tasks[knob] = replace(t, c_reg=c, c_ext=c + t.delta_c)
    if abs(target - util(tasks)) > UTILIZATION_TOLERANCE:
        raise GenerationError(
            f"cannot reach ECU utilization {target:.2f} "
            f"(best {util(tasks):.3f}) at this resolution")
    return tasks


def generate(spec: GenSpec) -> SystemModel:
    """Generate a system matching the period distribution, ECU and bus
    utilization targets, and randomized authentication parameters.

    Deterministic per seed.  QoC transaction parameters (offsets, deadlines,
    initial authentication offsets) are left unset for synthesis; background
    workload ships complete with zero offsets and implicit deadlines.
    """
    rng = np.random.default_rng(spec.seed)
    res = spec.resolution
    ticks = lambda ms: res.ticks(ms)
    frame = frame_time(CAN_PAYLOAD_BITS, spec.bus_rate, res)

    n_tx = spec.n_transactions
    total_ecu_tasks = max(2 * n_tx + 1, round(2 * n_tx / spec.qoc_share))
    n_background = total_ecu_tasks - 2 * n_tx

    tx_periods = [ticks(_draw_period(rng, BUS_PERIOD_SHARES))
                  for _ in range(n_tx)]

    # ECU mapping: sensing and control sides of one transaction are kept on
    # different ECUs when the platform has more than one.
    ecu_ids = [f"ecu{i}" for i in range(spec.ecu_count)]
    placements: dict[str, list[str]] = {e: [] for e in ecu_ids}
    transactions = []
    for i, p in enumerate(tx_periods):
        pol_l = int(rng.integers(spec.l_range[0], spec.l_range[1] + 1))
        pol_f = int(rng.integers(spec.f_range[0],
                                 min(spec.f_range[1], pol_l) + 1))
        sens = SecureTask(f"tx{i}_sens", "sensing", 1, 1, p)
        net = SecureTask(f"tx{i}_net", "message", frame, 2 * frame, p)
        ctrl = SecureTask(f"tx{i}_ctrl", "control", 1, 1, p)
        tx = assemble_transaction(sens, net, ctrl, AuthPolicy(f=pol_f, l=pol_l),
                                  transaction_id=f"tx{i}", plant_id=f"plant{i}")
        transactions.append(tx)
        send_ecu = ecu_ids[(2 * i) % len(ecu_ids)]
        recv_ecu = ecu_ids[(2 * i + 1) % len(ecu_ids)]
        placements[send_ecu].append(tx.sens.id)
        placements[recv_ecu].append(tx.ctrl.id)

    background: list[SecureTask] = []
    for i in range(n_background):
        p = ticks(_draw_period(rng, ECU_PERIOD_SHARES))
        background.append(SecureTask(f"bg{i}", BACKGROUND, 1, 1, p, 0, p))
        placements[ecu_ids[i % len(ecu_ids)]].append(f"bg{i}")

    # per-ECU execution time budgets via UUniFast, then integer rescaling
    by_id = {t.id: t for t in background}
    for tx in transactions:
        by_id[tx.sens.id] = tx.sens
        by_id[tx.ctrl.id] = tx.ctrl
    from dataclasses import replace
    for ecu in ecu_ids:
        ids = placements[ecu]
        if not ids:
            continue
        shares = _uunifast(rng, len(ids), spec.target_ecu_utilization)
        tuned = []
        for tid, u in zip(ids, shares):
            t = by_id[tid]
            c = min(t.p, max(1, round(u * t.p)))
            overhead = 0
            if t.kind != BACKGROUND:
                # keep the chain packable: the frame plus signing overhead
                # must leave room for the message and the receiving side
                c = min(c, max(1, t.p // 3))
                overhead = max(1, min(round(float(rng.uniform(0.25, 1.0)) * c),
                                      max(1, t.p // 6)))
            tuned.append(replace(t, c_reg=c, c_ext=c + overhead))
        tuned = _tune_ecu(tuned, spec.target_ecu_utilization)
        for t in tuned:
            by_id[t.id] = t

    # bus fill: QoC frames first, then background frames drawn from the bus
    # distribution while they fit, topped off with long-period frames
    bus_ids = [tx.net.id for tx in transactions]
    bus_util = sum(frame / p for p in tx_periods)
    if bus_util > spec.target_bus_utilization + UTILIZATION_TOLERANCE:
        raise GenerationError(
            f"QoC frames alone use {bus_util:.3f} of the bus, above the "
            f"target {spec.target_bus_utilization:.2f}")
    bg_msgs: list[SecureTask] = []
    misses = 0
    while misses < 64:
        p = ticks(_draw_period(rng, BUS_PERIOD_SHARES))
        if bus_util + frame / p > spec.target_bus_utilization:
            misses += 1
            continue
        m = SecureTask(f"bgm{len(bg_msgs)}", BACKGROUND, frame, frame, p, 0, p)
        bg_msgs.append(m)
        bus_util += frame / p
        misses = 0
    top_p = ticks(max(BUS_PERIOD_SHARES))
    while (spec.target_bus_utilization - bus_util > UTILIZATION_TOLERANCE * 0.5
           and bus_util + frame / top_p <= spec.target_bus_utilization):
        m = SecureTask(f"bgm{len(bg_msgs)}", BACKGROUND, frame, frame,
                       top_p, 0, top_p)
        bg_msgs.append(m)
        bus_util += frame / top_p
    if abs(spec.target_bus_utilization - bus_util) > UTILIZATION_TOLERANCE:
        raise GenerationError(
            f"cannot reach bus utilization {spec.target_bus_utilization:.2f} "
            f"(best {bus_util:.3f}) with {frame}-tick frames")

    transactions = [
        ControlTransaction(tx.id, tx.p, by_id[tx.sens.id], tx.net,
                           by_id[tx.ctrl.id], tx.policy, tx.plant_id)
        for tx in transactions]
    background = [by_id[t.id] for t in background]
    system = SystemModel(
        transactions=tuple(transactions),
        background=tuple(background) + tuple(bg_msgs),
        ecus=tuple((e, tuple(placements[e])) for e in ecu_ids),
        bus=tuple(bus_ids) + tuple(m.id for m in bg_msgs),
        c_max_nrt=frame,
        resolution=res)
    bad = system.violations()
    if bad:
        raise GenerationError("generator produced an invalid system: "
                              + "; ".join(bad))
    return system


def case_study_system(resolution: Resolution | None = None,
                      background_frames: int = 70,
                      ecu_utilization: float = 0.40,
                      seed: int = 1) -> SystemModel:
    """Automotive case-study shape: adaptive cruise control, lane keeping
    and driveline management at 20 ms on a 1 Mbps bus, non-QoC workload
    spread over eight ECUs per the benchmark period distribution.

    The default resolution of 5 us/tick represents the 135 us worst-case
    frame exactly (27 ticks).
    """
    res = resolution or Resolution(200, "ms")
    rng = np.random.default_rng(seed)
    frame = frame_time(CAN_PAYLOAD_BITS, 1e6, res)
    p20 = res.ticks(20)

    plants = (("acc", 5, 3), ("lane_keeping", 10, 2), ("driveline", 10, 1))
    ecu_ids = [f"ecu{i}" for i in range(8)]
    placements: dict[str, list[str]] = {e: [] for e in ecu_ids}
    transactions = []
    for i, (plant, l, f) in enumerate(plants):
        exec_ticks = max(1, res.ticks(0.5))
        sign_ticks = max(1, res.ticks(0.1))
        sens = SecureTask(f"{plant}_sens", "sensing", exec_ticks,
                          exec_ticks + sign_ticks, p20)
        net = SecureTask(f"{plant}_net", "message", frame, 2 * frame, p20)
        ctrl = SecureTask(f"{plant}_ctrl", "control", exec_ticks,
                          exec_ticks + sign_ticks, p20)
        tx = assemble_transaction(sens, net, ctrl, AuthPolicy(f=f, l=l),
                                  transaction_id=f"tx_{plant}", plant_id=plant)
        transactions.append(tx)
        placements[ecu_ids[i]].append(tx.sens.id)
        placements[ecu_ids[3 + i]].append(tx.ctrl.id)

    background: list[SecureTask] = []
    for i in range(8 * 6):
        p = res.ticks(_draw_period(rng, ECU_PERIOD_SHARES))
        background.append(SecureTask(f"bg{i}", BACKGROUND, 1, 1, p, 0, p))
        placements[ecu_ids[i % 8]].append(f"bg{i}")
    from dataclasses import replace
    by_id = {t.id: t for t in background}
    for tx in transactions:
        by_id[tx.sens.id] = tx.sens
        by_id[tx.ctrl.id] = tx.ctrl
    for ecu in ecu_ids:
        ids = placements[ecu]
        shares = _uunifast(rng, len(ids), ecu_utilization)
        tuned = []
        for tid, u in zip(ids, shares):
            t = by_id[tid]
            c = min(t.p, max(1, round(u * t.p)))
            tuned.append(replace(t, c_reg=c, c_ext=c + t.delta_c))
        for t in _tune_ecu(tuned, ecu_utilization):
            by_id[t.id] = t

    bg_msgs = []
    for i in range(background_frames):
        p = res.ticks(_draw_period(rng, BUS_PERIOD_SHARES))
        bg_msgs.append(SecureTask(f"bgm{i}", BACKGROUND, frame, frame, p, 0, p))

    transactions = [
        ControlTransaction(tx.id, tx.p, by_id[tx.sens.id], tx.net,
                           by_id[tx.ctrl.id], tx.policy, tx.plant_id)
        for tx in transactions]
    return SystemModel(
        transactions=tuple(transactions),
        background=tuple(background) + tuple(bg_msgs),
        ecus=tuple((e, tuple(placements[e])) for e in ecu_ids),
        bus=tuple(tx.net.id for tx in transactions)
            + tuple(m.id for m in bg_msgs),
        c_max_nrt=frame,
        resolution=res)
