"""Closed-loop co-simulation of a plant under stealthy false-data injection.

An observer-based controller with a windowed residual detector runs against
an attacker that may corrupt delivered measurements except at steps covered
by the authentication policy's zero pattern.  Sampled and greedy attack
searches give an empirical lower estimate of the worst-case attack-induced
estimation error for a policy (l, f); the formal reachability machinery the
curves ultimately come from is out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelError


class PlantError(ValueError):
    """Dimension mismatches and other plant specification problems."""


class PolicyViolationError(ValueError):
    """An attack strategy injected data at an authenticated step."""


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time linear plant with observer, state feedback, detector.

    The detector raises an alarm when the sum of the last ``detector_window``
    normalized residual energies exceeds ``detector_threshold``.
    """

    plant_id: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    observer_gain: np.ndarray
    feedback_gain: np.ndarray
    w_cov: np.ndarray | None = None
    v_cov: np.ndarray | None = None
    detector_window: int = 1
    detector_threshold: float = 1.0
    detector_scale: np.ndarray | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        n = a.shape[0]
        if a.shape != (n, n):
            raise PlantError("state matrix must be square")
        b = np.asarray(self.b, dtype=float).reshape(n, -1)
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if c.shape[1] != n:
            raise PlantError("output matrix width must match the state size")
        q = c.shape[0]
        obs = np.asarray(self.observer_gain, dtype=float).reshape(n, q)
        fbk = np.asarray(self.feedback_gain, dtype=float).reshape(b.shape[1], n)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "observer_gain", obs)
        object.__setattr__(self, "feedback_gain", fbk)
        for name, dim in (("w_cov", n), ("v_cov", q)):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=float).reshape(dim, dim)
                object.__setattr__(self, name, m)
        scale = self.detector_scale
        scale = np.eye(q) if scale is None else \
            np.asarray(scale, dtype=float).reshape(q, q)
        object.__setattr__(self, "detector_scale", scale)
        if self.detector_window < 1:
            raise PlantError("detector window must be at least one step")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class ZeroPattern:
    """Authenticated-step pattern of a periodic cumulative policy."""

    l: int
    f: int
    s: int = 0

    def __post_init__(self):
        if self.l < 1 or not 1 <= self.f <= self.l or not 0 <= self.s:
            raise ModelError("invalid authentication pattern")

    def authenticated(self, k: int) -> bool:
        return k >= self.s and (k - self.s) % self.l < self.f


@dataclass
class ClosedLoopResult:
    states: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray
    detector_stat: np.ndarray
    alarms: np.ndarray
    attack: np.ndarray

    def max_error_before_alarm(self) -> float:
        """Largest estimation-error norm over steps preceding the first alarm."""
        horizon = len(self.errors)
        first = int(np.argmax(self.alarms)) if self.alarms.any() else horizon
        if first == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.errors[:first], axis=1)))


class ZeroAttack:
    """No injection at any step."""

    def propose(self, k, authenticated, residual_free, budget, lift, shape, rng):
        return np.zeros(lift.shape[1])


class GreedyStealthyAttack:
    """One-step error maximization under the instantaneous detector margin.

    The attacker picks the realized residual on the stealth ellipsoid that
    pushes the next estimation error furthest; at authenticated steps it
    stays silent by contract.  Exact for single-output plants (the maximum
    of a convex objective over an interval sits at an endpoint); a baseline
    candidate search elsewhere.
    """

    def __init__(self, margin: float = 1.0 - 1e-6):
        if not 0 < margin <= 1:
            raise PlantError("detector margin must be in (0, 1]")
        self.margin = margin

    def propose(self, k, authenticated, residual_free, budget, lift, shape, rng):
        if authenticated:
            return np.zeros(lift.shape[1])
        radius = np.sqrt(max(0.0, budget) * self.margin)
        q = lift.shape[1]
        candidates = [np.zeros(q)]
        if radius > 0:
            if q == 1:
                unit_dirs = [np.ones(1)]
            else:
                _, vecs = np.linalg.eigh(lift.T @ lift)
                unit_dirs = list(vecs.T)
                drive = lift.T @ residual_free
                norm = np.linalg.norm(drive)
                if norm > 1e-12:
                    unit_dirs.append(drive / norm)
            for u in unit_dirs:
                r = radius * (shape @ u)
                candidates += [r, -r]
        best, best_gain = candidates[0], -1.0
        for r in candidates:
            gain = float(np.linalg.norm(residual_free - lift @ r))
            if gain > best_gain:
                best, best_gain = r, gain
        return best - residual_free


class RandomStealthyAttack:
    """Residuals drawn uniformly inside the stealth ball; sampling baseline."""

    def propose(self, k, authenticated, residual_free, budget, lift, shape, rng):
        if authenticated:
            return np.zeros(lift.shape[1])
        q = lift.shape[1]
        radius = np.sqrt(max(0.0, budget)) * (1.0 - 1e-9)
        direction = rng.normal(size=q)
        norm = np.linalg.norm(direction)
        if norm < 1e-12 or radius <= 0:
            return -residual_free
        target = radius * rng.random() ** (1.0 / q) * (shape @ direction / norm)
        return target - residual_free


def simulate_closed_loop(plant: PlantModel, policy: ZeroPattern,
                         attack_strategy, horizon: int,
                         seed: int | None = 0) -> ClosedLoopResult:
    """Run the loop for ``horizon`` steps from the origin.

    The attack vector is forced to zero at authenticated steps; a strategy
    returning nonzero there is rejected rather than silently clipped.
    """
    n, q = plant.n_states, plant.n_outputs
    rng = np.random.default_rng(seed)
    chol_w = None if plant.w_cov is None else np.linalg.cholesky(
        plant.w_cov + 1e-15 * np.eye(n))
    chol_v = None if plant.v_cov is None else np.linalg.cholesky(
        plant.v_cov + 1e-15 * np.eye(q))
    s_inv = np.linalg.inv(plant.detector_scale)
    shape = np.linalg.cholesky(plant.detector_scale)
    lift = plant.observer_gain

    x = np.zeros(n)
    x_hat = np.zeros(n)
    window: list[float] = []
    states = np.zeros((horizon, n))
    estimates = np.zeros((horizon, n))
    errors = np.zeros((horizon, n))
    stats = np.zeros(horizon)
    alarms = np.zeros(horizon, dtype=bool)
    attack = np.zeros((horizon, q))

    for k in range(horizon):
        w = chol_w @ rng.normal(size=n) if chol_w is not None else np.zeros(n)
        v = chol_v @ rng.normal(size=q) if chol_v is not None else np.zeros(q)
        y = plant.c @ x + v
        e = x - x_hat
        residual_free = plant.c @ e + v
        used = sum(window[-(plant.detector_window - 1):]) if \
            plant.detector_window > 1 else 0.0
        budget = plant.detector_threshold - used
        authenticated = policy.authenticated(k)
        a = np.asarray(attack_strategy.propose(
            k, authenticated, residual_free, budget, lift, shape, rng),
            dtype=float)
        if authenticated and np.any(a != 0):
            raise PolicyViolationError(
                f"attack injected at authenticated step {k}")
        y_hat = y + a
        residual = y_hat - plant.c @ x_hat
        energy = float(residual @ s_inv @ residual)
        window.append(energy)
        stat = sum(window[-plant.detector_window:])
        u = -plant.feedback_gain @ x_hat

        states[k] = x
        estimates[k] = x_hat
        errors[k] = e
        stats[k] = stat
        alarms[k] = stat > plant.detector_threshold
        attack[k] = a

        x_hat = plant.a @ x_hat + plant.b @ u + plant.observer_gain @ residual
        x = plant.a @ x + plant.b @ u + w

    return ClosedLoopResult(states, estimates, errors, stats, alarms, attack)


def estimate_qoc_bound(plant: PlantModel, l: int, f: int, samples: int = 8,
                       horizon: int = 200, seed: int = 0) -> float:
    """Empirical lower estimate of the worst-case stealthy-attack error.

    Sample 0 is the deterministic greedy attacker; further samples draw
    random stealthy residual sequences.  Substreams are derived from
    (seed, sample index) so estimates pair across policies under a common
    seed, and growing ``samples`` can only raise the best-so-far maximum.
    """
    if samples < 1:
        raise PlantError("need at least one sample")
    if f > l:
        raise PlantError("block length exceeds authentication distance")
    pattern = ZeroPattern(l=l, f=f, s=0)
    best = 0.0
    for i in range(samples):
        strategy = GreedyStealthyAttack() if i == 0 else RandomStealthyAttack()
        run = simulate_closed_loop(plant, pattern, strategy, horizon,
                                   seed=np.random.SeedSequence([seed, i]))
        best = max(best, run.max_error_before_alarm())
    return best


def minimal_block_length(plant: PlantModel) -> int:
    """Smallest useful authentication block: min of the observability index
    and the number of (marginally) unstable eigenvalues.

    Zero means no block authentication is required at all (stable plant).
    """
    n = plant.n_states
    rows = [plant.c]
    rank = np.linalg.matrix_rank(plant.c)
    index = 1
    power = plant.c.copy()
    while rank < n and index < n:
        power = power @ plant.a
        rows.append(power)
        rank = np.linalg.matrix_rank(np.vstack(rows))
        index += 1
    if rank < n:
        raise PlantError(f"plant {plant.plant_id} is not observable")
    unstable = int(np.sum(np.abs(np.linalg.eigvals(plant.a)) >= 1.0))
    return min(index, unstable)
