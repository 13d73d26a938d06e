"""Classical dynamics of the wall / light / heavy hard-core chain.

Two independent routes are provided on purpose:

* closed forms and exact recursions for the collision sequence, where the
  light particle's velocity is folded by the wall bounce so that speeds stay
  positive: v_x(n) = v_x0 cos(n phi), v_y(n) = v_x0 eps sin(n phi) with
  phi = arctan(2 eps / (1 - eps^2));
* an event-driven simulator with raw signed velocities and geometric event
  detection, used as the oracle everything else is checked against.

Collision counting: n counts pair collisions only; wall bounces are recorded
in trajectories but do not increment n.  The asymptotic position/time laws
y(n) = y0 exp(2 n^2 eps^2) and t(n) = (2 y0 / v0) n [1 + eps^2 (...)] measure
time from a fictitious zeroth collision at the heavy particle's initial
position, so the light particle's initial half-flight is not part of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import MassPair

# relative tie-break window for simultaneous wall/pair events
_TIE = 1e-14


def collision_angle(eps: float) -> float:
    """Rotation angle per collision, arctan(2 eps / (1 - eps^2)) ~ 2 eps."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return math.atan2(2 * eps, 1 - eps * eps)


def max_collisions(eps: float) -> int:
    """Index of the last collision, arctan(1/eps)/phi rounded to the nearest int.

    The real-valued crossover where the light particle stops catching up is
    arctan(1/eps)/phi ~ pi/(4 eps) - 1/2; rounding keeps the result within
    one collision of pi/(4 eps) for all eps <= 0.2 while the folded closed
    forms stay valid up to this index (n phi < pi/2).
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return int(math.floor(math.atan(1 / eps) / collision_angle(eps) + 0.5))


def critical_count(eps: float) -> float:
    """Continuum collision count pi / (4 eps) where the ensemble refocuses."""
    return math.pi / (4 * eps)


def collision_velocity_map(v_x: float, v_y: float, masses: MassPair) -> tuple[float, float]:
    """One pair collision followed by the wall bounce, in folded speeds.

    Takes the approach speeds (v_x toward the heavy particle, v_y away from
    the wall), applies the elastic collision and re-folds the light particle's
    recoil through the wall, so both outputs are again approach speeds.
    Conserves m_x v_x^2 + m_y v_y^2 exactly.
    """
    if v_x <= v_y:
        raise ValueError("approach speeds must be closing (v_x > v_y)")
    m = masses.total
    v_x_new = ((masses.m_y - masses.m_x) * v_x - 2 * masses.m_y * v_y) / m
    v_y_new = (2 * masses.m_x * v_x + (masses.m_y - masses.m_x) * v_y) / m
    return v_x_new, v_y_new


def closed_form_velocities(n, eps: float, v_x0: float) -> tuple[float, float]:
    """Folded speeds after n pair collisions: v_x0 (cos(n phi), eps sin(n phi)).

    n may be fractional (continuum evaluation of the rotation law); it must
    not exceed max_collisions(eps), beyond which the folding breaks down.
    """
    if n < 0 or n > max_collisions(eps):
        raise ValueError(f"n={n} outside [0, {max_collisions(eps)}]")
    phi = collision_angle(eps)
    return v_x0 * math.cos(n * phi), v_x0 * eps * math.sin(n * phi)


@dataclass(frozen=True)
class ClassicalState:
    """Snapshot of the pair: positions, raw signed velocities, time, pair count."""
    x: float
    y: float
    v_x: float
    v_y: float
    t: float
    n: int


@dataclass(frozen=True)
class TrajectoryEvent:
    t: float
    kind: str                 # "wall" or "pair"
    state: ClassicalState     # state immediately after the event


@dataclass(frozen=True)
class ClassicalTrajectory:
    """Event record of one exact run; motion is linear between events."""
    initial: ClassicalState
    events: tuple[TrajectoryEvent, ...] = field(default_factory=tuple)

    @property
    def pair_events(self) -> tuple[TrajectoryEvent, ...]:
        return tuple(e for e in self.events if e.kind == "pair")

    @property
    def pair_count(self) -> int:
        return sum(1 for e in self.events if e.kind == "pair")

    @property
    def final(self) -> ClassicalState:
        return self.events[-1].state if self.events else self.initial

    def state_at(self, t: float) -> ClassicalState:
        """Interpolated state at time t (extrapolates freely past the last event)."""
        if t < self.initial.t:
            raise ValueError("t precedes the trajectory start")
        s = self.initial
        for e in self.events:
            if e.t > t:
                break
            s = e.state
        dt = t - s.t
        return ClassicalState(x=s.x + s.v_x * dt, y=s.y + s.v_y * dt,
                              v_x=s.v_x, v_y=s.v_y, t=t, n=s.n)

    def counts_at(self, t: float) -> tuple[int, int]:
        """(pair, wall) event counts up to and including time t."""
        pair = sum(1 for e in self.events if e.kind == "pair" and e.t <= t)
        wall = sum(1 for e in self.events if e.kind == "wall" and e.t <= t)
        return pair, wall


def event_driven_trajectory(x0: float, y0: float, v_x0: float, masses: MassPair,
                            t_end: float | None = None,
                            v_y0: float = 0.0) -> ClassicalTrajectory:
    """Exact event-driven run of the wall / light / heavy system.

    Next-event times come from closed-form linear motion, so there is no
    stepping error: wall hits flip v_x, pair hits apply the elastic map.
    Stops when no further event can occur (light particle slower than the
    heavy one and not wall-bound) or when t_end is passed.
    """
    if not 0 < x0 < y0:
        raise ValueError("need 0 < x0 < y0")
    if v_x0 == 0 and v_y0 == 0:
        raise ValueError("need a moving light particle")
    m = masses.total
    state = ClassicalState(x=x0, y=y0, v_x=v_x0, v_y=v_y0, t=0.0, n=0)
    events: list[TrajectoryEvent] = []
    # generous cap; the energy argument guarantees far earlier termination
    cap = 4 * max_collisions(min(masses.epsilon, 0.999)) + 64 if masses.epsilon < 1 else 64
    for _ in range(cap):
        t_wall = -state.x / state.v_x if state.v_x < 0 else math.inf
        t_pair = ((state.y - state.x) / (state.v_x - state.v_y)
                  if state.v_x > state.v_y else math.inf)
        if not math.isfinite(t_wall) and not math.isfinite(t_pair):
            break
        # near-simultaneous events: take the wall bounce first
        if t_wall <= t_pair * (1 + _TIE):
            dt, kind = t_wall, "wall"
        else:
            dt, kind = t_pair, "pair"
        t_next = state.t + dt
        if t_end is not None and t_next > t_end:
            break
        x = state.x + state.v_x * dt
        y = state.y + state.v_y * dt
        if kind == "wall":
            state = ClassicalState(x=0.0, y=y, v_x=-state.v_x, v_y=state.v_y,
                                   t=t_next, n=state.n)
        else:
            v_x_new = ((masses.m_x - masses.m_y) * state.v_x
                       + 2 * masses.m_y * state.v_y) / m
            v_y_new = (2 * masses.m_x * state.v_x
                       + (masses.m_y - masses.m_x) * state.v_y) / m
            state = ClassicalState(x=x, y=y, v_x=v_x_new, v_y=v_y_new,
                                   t=t_next, n=state.n + 1)
        events.append(TrajectoryEvent(t=t_next, kind=kind, state=state))
    else:
        raise RuntimeError("event cap exceeded; inconsistent dynamics")
    return ClassicalTrajectory(
        initial=ClassicalState(x=x0, y=y0, v_x=v_x0, v_y=v_y0, t=0.0, n=0),
        events=tuple(events))


@dataclass(frozen=True)
class CollisionTable:
    """Exact collision sequence for unit initial position and speed.

    Index k runs over collisions in the fictitious-zeroth convention:
    times[0] = 0 at position 1, times[k] of the k-th collision thereafter.
    Positions and times scale linearly with y_m0 / v_x0, which is what makes
    whole-ensemble evaluations cheap.
    """
    eps: float
    times: np.ndarray       # shape (K+1,), times[0] = 0
    positions: np.ndarray   # shape (K+1,), positions[0] = 1
    v_x: np.ndarray         # folded speeds after collision k
    v_y: np.ndarray

    @property
    def count(self) -> int:
        return len(self.times) - 1


def collision_table(eps: float, n_limit: int | None = None) -> CollisionTable:
    """Exact positions/times of the collision sequence (unit y0 and v0)."""
    phi = collision_angle(eps)
    total = max_collisions(eps) + 1
    if n_limit is not None:
        total = min(total, n_limit)
    ks = np.arange(total + 1)
    v_x = np.cos(ks * phi)
    v_y = eps * np.sin(ks * phi)
    times = np.zeros(total + 1)
    pos = np.ones(total + 1)
    for k in range(total):
        closing = v_x[k] - v_y[k]
        if closing <= 0:
            # the (k+1)-th collision never happens; truncate
            ks, v_x, v_y = ks[:k + 1], v_x[:k + 1], v_y[:k + 1]
            times, pos = times[:k + 1], pos[:k + 1]
            break
        times[k + 1] = times[k] + 2 * pos[k] / closing
        pos[k + 1] = pos[k] * (v_x[k] + v_y[k]) / closing
    return CollisionTable(eps=eps, times=times, positions=pos, v_x=v_x, v_y=v_y)


def collision_position_approx(n, y_m0: float, eps: float) -> float:
    """Asymptotic position of the n-th collision, y_m0 exp(2 n^2 eps^2)."""
    if n < 0 or n > max_collisions(eps):
        raise ValueError(f"n={n} outside [0, {max_collisions(eps)}]")
    return y_m0 * math.exp(2 * n * n * eps * eps)


def collision_time_approx(n, y_m0: float, v_x0: float, eps: float) -> float:
    """Asymptotic time of the n-th collision in the zeroth-collision convention.

    (2 y_m0 / v_x0) n [1 + eps^2 (4 n^2 / 3 + n + 1/3)]: growing positions and
    shrinking closing speed make each round trip longer than 2 y_m0 / v_x0.
    """
    if n < 0 or n > max_collisions(eps):
        raise ValueError(f"n={n} outside [0, {max_collisions(eps)}]")
    return (2 * y_m0 / v_x0) * n * (1 + eps * eps * (4 * n * n / 3 + n + 1 / 3))


def collisions_by_time(t: float, y_m0: float, v_x0: float, eps: float) -> int:
    """Number of collisions completed by time t, by inverting the time law.

    Floor of the numerical inverse of collision_time_approx; shares that
    law's validity window and counting convention.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    n_top = max_collisions(eps)
    if t >= collision_time_approx(n_top, y_m0, v_x0, eps):
        return n_top
    lo, hi = 0, n_top
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if collision_time_approx(mid, y_m0, v_x0, eps) <= t:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# whole-ensemble kinematics: every channel shares the folded speed sequence,
# so positions and times scale linearly with the initial heavy position
# ---------------------------------------------------------------------------

def pair_collision_times(y_m0, x_m0: float, v_x0: float,
                         table: CollisionTable) -> np.ndarray:
    """Actual times of collisions 1..K for initial heavy position(s) y_m0.

    The first collision happens at (y_m0 - x_m0)/v_x0 at position y_m0 exactly
    (the heavy particle has not moved yet); later gaps scale with y_m0.
    """
    y_m0 = np.asarray(y_m0, dtype=float)
    rel = table.times[1:] - table.times[1]        # zero-based gap sequence
    return ((y_m0[..., None] - x_m0) / v_x0
            + y_m0[..., None] * rel / v_x0)


def channel_kinematics(t: float, y_m0, x_m0: float, v_x0: float,
                       table: CollisionTable):
    """Exact (x_m, y_m, pair count, wall count) at time t, vectorized over y_m0.

    Between collisions the light particle follows |y(k) - (t - t_k) v_x(k)|,
    which folds the wall bounce into one expression.
    """
    y_m0 = np.atleast_1d(np.asarray(y_m0, dtype=float))
    times = pair_collision_times(y_m0, x_m0, v_x0, table)     # (..., K)
    k = (times <= t).sum(axis=-1)                             # collisions so far
    before = k == 0
    ki = np.maximum(k - 1, 0)                                 # index into table rows
    pos_k = y_m0 * table.positions[1:][ki]
    t_k = np.take_along_axis(times, ki[..., None], axis=-1)[..., 0]
    vx_k = v_x0 * table.v_x[1:][ki]
    vy_k = v_x0 * table.v_y[1:][ki]
    tau = t - t_k
    y_m = np.where(before, y_m0, pos_k + tau * vy_k)
    x_m = np.where(before, x_m0 + v_x0 * t, np.abs(pos_k - tau * vx_k))
    # wall bounces: one after each collision once the light particle reaches
    # x = 0, provided it recoiled toward the wall (folded v_x > 0)
    with np.errstate(divide="ignore"):
        wall_times = times + (y_m0[..., None] * table.positions[1:]
                              / (v_x0 * table.v_x[1:]))
    walls = ((times <= t) & (wall_times <= t) & (table.v_x[1:] > 0)).sum(axis=-1)
    return x_m, y_m, k, walls


def channel_coords(y_m0: float, t: float, *, x_M0: float, y_M0: float,
                   v_x0: float, eps: float) -> tuple[float, float]:
    """Channel coordinates from the linear scaling law around the reference.

    x_m = x_M(t) + (sin(2 eps n)/eps) (y_m0 - y_M0),
    y_m = y_M(t) + cos(2 eps n) (y_m0 - y_M0),
    with the reference trajectory and n taken from the exact kinematics.
    The instant must be between collisions for both channels.
    """
    table = collision_table(eps)
    x_ref, y_ref, n_ref, w_ref = channel_kinematics(t, np.array([y_M0]), x_M0, v_x0, table)
    _, _, n_ch, w_ch = channel_kinematics(t, np.array([y_m0]), x_M0, v_x0, table)
    if n_ref[0] != n_ch[0] or w_ref[0] != w_ch[0]:
        raise ValueError("mixed-phase instant: channels straddle an event")
    n = float(n_ref[0])
    off = y_m0 - y_M0
    return (float(x_ref[0]) + math.sin(2 * eps * n) / eps * off,
            float(y_ref[0]) + math.cos(2 * eps * n) * off)


@dataclass(frozen=True)
class EnsembleWidths:
    """Classical ensemble widths after n collisions."""
    n: float
    dsigma_y: float
    dsigma_x: float


def ensemble_widths(n, eps: float, dsigma_y0: float) -> EnsembleWidths:
    """Width pair (dsigma_y0 |cos 2 eps n|, (dsigma_y0/eps) |sin 2 eps n|)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return EnsembleWidths(n=n,
                          dsigma_y=dsigma_y0 * abs(math.cos(2 * eps * n)),
                          dsigma_x=dsigma_y0 / eps * abs(math.sin(2 * eps * n)))


def monte_carlo_positions(times, n_samples: int, seed: int, *, y_M0: float,
                          dsigma_y0: float, x_M0: float, v_x0: float,
                          eps: float):
    """Ensemble positions at the given instants for Gaussian-distributed y_m0.

    Returns (x_m, y_m, counts) arrays of shape (n_samples, len(times)).
    Samples are independent channels run through the exact kinematics with a
    deterministic seed.
    """
    rng = np.random.default_rng(seed)
    y0 = rng.normal(y_M0, dsigma_y0, size=n_samples)
    table = collision_table(eps)
    xs = np.empty((n_samples, len(times)))
    ys = np.empty((n_samples, len(times)))
    ns = np.empty((n_samples, len(times)), dtype=int)
    for j, t in enumerate(times):
        x_m, y_m, k, _ = channel_kinematics(float(t), y0, x_M0, v_x0, table)
        xs[:, j], ys[:, j], ns[:, j] = x_m, y_m, k
    return xs, ys, ns
