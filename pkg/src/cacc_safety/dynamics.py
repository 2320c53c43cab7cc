"""Platoon trajectories under emergency braking.

The simulator is written over arrays of shape ``(B, N + 1)``: ``B`` independent
runs (one per row) of a platoon whose column 0 is the leader. Every update is
elementwise within a row, so a row's result does not depend on which other rows
share the batch. The scalar operations (``control_input``, ``rk4_step``, ...)
route through the same array kernels with ``B = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergedRunError
from .gains import GainSet

COORDINATED = "coordinated"
UNCOORDINATED = "uncoordinated"
MODES = (COORDINATED, UNCOORDINATED)

DIVERGENCE_LIMIT = 1e9
#: Steps between checks for rows that reached a fixed point.
RETIRE_EVERY = 20


def default_gains() -> GainSet:
    return GainSet(ka=0.2, kv=0.92, kp=0.03, r=1, hw=0.86)


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = COORDINATED
    N: int = 10
    d: float = 6.0
    v0: float = 25.0
    gains: GainSet = field(default_factory=default_gains)
    tau: float = 0.5
    D0: float = 9.75
    clamp_reverse: bool = True
    leader_through_lag: bool = True
    T: float = 50.0
    h: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.d <= 0:
            raise ValueError("standstill spacing d must be positive")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")
        if self.T <= 0 or self.h <= 0:
            raise ValueError("T and h must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.D0 < 0:
            raise ValueError("D0 must be non-negative")
        steps = self.T / self.h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T/h must be an integer number of steps, got {steps}")

    @property
    def K(self) -> int:
        return int(round(self.T / self.h))

    @property
    def r(self) -> int:
        return self.gains.r

    @property
    def hw(self) -> float:
        return self.gains.hw

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass
class VehicleState:
    x: float
    v: float
    a: float
    D: float
    frozen: bool = False
    rv_at_impact: Optional[float] = None

    @property
    def collided(self) -> bool:
        return self.rv_at_impact is not None


@dataclass
class PlatoonState:
    vehicles: list  # index 0 is the leader
    k: int = 0
    h: float = 0.01

    @property
    def N(self) -> int:
        return len(self.vehicles) - 1

    def arrays(self):
        """Return ``(x, v, a, D, frozen, cs, rv)`` as ``(1, N+1)`` arrays."""
        vs = self.vehicles
        x = np.array([[s.x for s in vs]], dtype=float)
        v = np.array([[s.v for s in vs]], dtype=float)
        a = np.array([[s.a for s in vs]], dtype=float)
        D = np.array([[s.D for s in vs]], dtype=float)
        frozen = np.array([[s.frozen for s in vs]], dtype=bool)
        cs = np.array([[s.collided for s in vs]], dtype=bool)
        rv = np.array([[s.rv_at_impact or 0.0 for s in vs]], dtype=float)
        return x, v, a, D, frozen, cs, rv

    @classmethod
    def from_arrays(cls, x, v, a, D, frozen, cs, rv, k=0, h=0.01) -> "PlatoonState":
        vehicles = [
            VehicleState(
                float(x[0, i]),
                float(v[0, i]),
                float(a[0, i]),
                float(D[0, i]),
                bool(frozen[0, i]),
                float(rv[0, i]) if cs[0, i] else None,
            )
            for i in range(x.shape[1])
        ]
        return cls(vehicles, k, h)


@dataclass(frozen=True)
class IterationOutcome:
    cs: tuple  # CS_1 .. CS_N
    rv: tuple  # RV_1 .. RV_N

    @property
    def CS(self) -> int:
        return int(sum(self.cs))

    @property
    def RV(self) -> float:
        return float(math.fsum(self.rv))

    @property
    def any_collision(self) -> bool:
        return self.CS >= 1


@dataclass(frozen=True)
class BatchOutcome:
    """Per-row collision flags and impact relative velocities, shape ``(B, N)``."""

    cs: np.ndarray
    rv: np.ndarray

    def row(self, i: int) -> IterationOutcome:
        return IterationOutcome(tuple(int(c) for c in self.cs[i]), tuple(float(x) for x in self.rv[i]))

    def __len__(self):
        return self.cs.shape[0]


# ---------------------------------------------------------------------------
# array kernels


def _initial_arrays(cfg: ScenarioConfig, follower_D):
    D_f = np.atleast_2d(np.asarray(follower_D, dtype=float))
    B, N = D_f.shape
    if N != cfg.N:
        raise ValueError(f"expected {cfg.N} follower decelerations per run, got {N}")
    if np.any(D_f <= 0):
        raise ValueError("follower maximum decelerations must be positive")
    idx = np.arange(N + 1, dtype=float)
    x = np.tile(-idx * cfg.d - idx * cfg.hw * cfg.v0, (B, 1))
    v = np.full((B, N + 1), float(cfg.v0))
    a = np.zeros((B, N + 1))
    D = np.empty((B, N + 1))
    D[:, 0] = cfg.D0
    D[:, 1:] = D_f
    return x, v, a, D


def _braking_input(v, D):
    return np.where(v > 0, -D, 0.0)


def _control_law(x, v, a, cfg: ScenarioConfig):
    """Unsaturated multi-predecessor law for columns 1..N (column 0 left at zero).

    Vehicle ``i`` sums over ``q = 1 .. min(r, i)``; the sum runs in ascending q.
    """
    g = cfg.gains
    u = np.zeros_like(x)
    n1 = x.shape[1]
    for q in range(1, min(g.r, n1 - 1) + 1):
        xi, vi = x[:, q:], v[:, q:]
        xp, vp, ap = x[:, : n1 - q], v[:, : n1 - q], a[:, : n1 - q]
        u[:, q:] += g.ka * ap - g.kv * (vi - vp) - g.kp * (xi - xp + cfg.d * q + q * g.hw * vi)
    return u


def _inputs(x, v, a, D, cfg: ScenarioConfig):
    if cfg.mode == UNCOORDINATED:
        return _braking_input(v, D)
    u = _control_law(x, v, a, cfg)
    u[:, 0] = _braking_input(v[:, 0], D[:, 0])
    return u


def _direct_mask(cfg: ScenarioConfig, n1: int):
    """Columns whose acceleration is assigned the input instead of passing through the lag."""
    mask = np.zeros(n1, dtype=bool)
    if not cfg.leader_through_lag:
        mask[0] = True
        if cfg.mode == UNCOORDINATED:
            mask[:] = True
    return mask


def _lag_rk4(a, u, tau, h):
    """Classical RK4 stage combination for ``tau a' + a = u`` with ``u`` held over the step."""
    k1 = -a / tau + u / tau
    k2 = -(a + h / 2 * k1) / tau + u / tau
    k3 = -(a + h / 2 * k2) / tau + u / tau
    k4 = -(a + h * k3) / tau + u / tau
    return a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_lag_gain(tau, h):
    """Factor ``c`` with ``RK4 step = a + c (u - a)`` for the linear lag.

    The four stages collapse to the degree-4 Taylor polynomial of
    ``1 - exp(-h/tau)``; using it directly saves most of the per-step work.
    """
    z = h / tau
    return z * (1 - z / 2 + z * z / 6 - z**3 / 24)


def _advance(x, v, a, ubar, frozen, tau, h, clamp_reverse, direct=None):
    """One explicit step: Euler for position and velocity, RK4 for the lag.

    Frozen vehicles carry zero velocity and acceleration and receive zero
    input, which leaves them exactly in place.
    """
    ubar = np.where(frozen, 0.0, ubar)
    use_direct = direct is not None and direct.any()
    if use_direct:
        a = np.where(direct, ubar, a)
    x_new = v * h
    x_new += x
    v_new = a * h
    v_new += v
    a_new = ubar - a
    a_new *= rk4_lag_gain(tau, h)
    a_new += a
    if use_direct:
        a_new = np.where(direct, ubar, a_new)
    if clamp_reverse:
        stop = (v_new < 0) | ((v_new == 0) & (a_new < 0))
        if stop.any():
            v_new[stop] = 0.0
            a_new[stop] = 0.0
    return x_new, v_new, a_new


def _detect(x, v, a, frozen, cs, rv):
    """Record new collisions and freeze the colliding pairs, in place.

    Every adjacent pair is tested on the post-step state; relative velocities
    use the velocities before any freezing of this step (equivalent to a
    front-to-rear scan, since freezing never moves a vehicle).
    """
    hits = (x[:, 1:] >= x[:, :-1]) & ~cs[:, 1:]
    if not hits.any():
        return hits
    rel = v[:, 1:] - v[:, :-1]
    rv[:, 1:] = np.where(hits, rel, rv[:, 1:])
    cs[:, 1:] |= hits
    frozen[:, 1:] |= hits
    frozen[:, :-1] |= hits
    v[frozen] = 0.0
    a[frozen] = 0.0
    return hits


def _check_finite(k, x, v, a):
    peak = max(np.abs(x).max(), np.abs(v).max(), np.abs(a).max())
    if not peak <= DIVERGENCE_LIMIT:
        for arr in (x, v, a):
            bad = ~(np.abs(arr) <= DIVERGENCE_LIMIT)
            if bad.any():
                row = int(np.argwhere(bad)[0][0])
                break
        err = DivergedRunError(f"state exceeded {DIVERGENCE_LIMIT:g} at step {k}", step=k)
        err.row = row
        raise err


# ---------------------------------------------------------------------------
# scalar operations


def saturate(u, D):
    """Clamp commanded acceleration to the vehicle's capability ``[-D, D]``."""
    return np.clip(u, -D, D) if isinstance(u, np.ndarray) else min(max(u, -D), D)


def initial_platoon(cfg: ScenarioConfig, follower_D: Sequence[float]) -> PlatoonState:
    """Equilibrium platoon: leader at 0, follower ``i`` at ``-i (d + hw v0)``."""
    x, v, a, D = _initial_arrays(cfg, [list(follower_D)])
    z = np.zeros_like(x, dtype=bool)
    return PlatoonState.from_arrays(x, v, a, D, z, z.copy(), np.zeros_like(x), k=0, h=cfg.h)


def control_input(i: int, p: PlatoonState, cfg: ScenarioConfig) -> float:
    """Unsaturated coordinated input of follower ``i`` (uses ``min(r, i)`` predecessors)."""
    if i < 1:
        raise ValueError("control_input is defined for followers (i >= 1)")
    x, v, a, *_ = p.arrays()
    return float(_control_law(x, v, a, cfg)[0, i])


def leader_input(p: PlatoonState, cfg: ScenarioConfig) -> float:
    lead = p.vehicles[0]
    return -cfg.D0 if lead.v > 0 else 0.0


def rk4_step(
    p: PlatoonState,
    inputs: Sequence[float],
    tau: float,
    clamp_reverse: bool = True,
    direct: Optional[Sequence[bool]] = None,
) -> PlatoonState:
    """Advance every vehicle one step with already-saturated ``inputs``."""
    x, v, a, D, frozen, cs, rv = p.arrays()
    ubar = np.asarray([inputs], dtype=float)
    mask = None if direct is None else np.asarray(direct, dtype=bool)
    x, v, a = _advance(x, v, a, ubar, frozen, tau, p.h, clamp_reverse, mask)
    return PlatoonState.from_arrays(x, v, a, D, frozen, cs, rv, k=p.k + 1, h=p.h)


def detect_and_freeze(p: PlatoonState):
    """Return the updated state and the list of ``(follower index, RV)`` recorded this step."""
    x, v, a, D, frozen, cs, rv = p.arrays()
    hits = _detect(x, v, a, frozen, cs, rv)
    events = [(int(i) + 1, float(rv[0, i + 1])) for i in np.flatnonzero(hits[0])]
    return PlatoonState.from_arrays(x, v, a, D, frozen, cs, rv, k=p.k, h=p.h), events


# ---------------------------------------------------------------------------
# full runs

#: Signature of a trajectory recorder: (step, x, v, a, u, ubar, frozen) with (1, N+1) arrays.
Recorder = Callable[[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], None]


def simulate_batch(
    cfg: ScenarioConfig,
    follower_D,
    *,
    retire: bool = True,
    recorder: Optional[Recorder] = None,
) -> BatchOutcome:
    """Run one emergency-braking trajectory per row of ``follower_D`` (shape ``(B, N)``).

    With ``retire`` on, rows whose state did not change over a step have reached
    a fixed point of the (time-invariant) step map and are dropped from further
    integration; their outcome is already final.
    """
    x, v, a, D = _initial_arrays(cfg, follower_D)
    B, n1 = x.shape
    frozen = np.zeros((B, n1), dtype=bool)
    cs = np.zeros((B, n1), dtype=bool)
    rv = np.zeros((B, n1))
    out_cs = np.zeros((B, n1 - 1), dtype=np.int8)
    out_rv = np.zeros((B, n1 - 1))
    rows = np.arange(B)
    direct = _direct_mask(cfg, n1)
    retire = retire and recorder is None

    for k in range(cfg.K):
        u = _inputs(x, v, a, D, cfg)
        ubar = saturate(u, D)
        if recorder is not None:
            recorder(k, x, v, a, u, ubar, frozen)
        check = retire and k % RETIRE_EVERY == RETIRE_EVERY - 1
        if check:
            x_prev, v_prev, a_prev = x, v, a
        x, v, a = _advance(x, v, a, ubar, frozen, cfg.tau, cfg.h, cfg.clamp_reverse, direct)
        try:
            _check_finite(k + 1, x, v, a)
        except DivergedRunError as err:
            err.row = int(rows[err.row])
            raise
        _detect(x, v, a, frozen, cs, rv)
        if check:
            static = np.all((x == x_prev) & (v == v_prev) & (a == a_prev), axis=1)
            if static.any():
                done = rows[static]
                out_cs[done] = cs[static, 1:]
                out_rv[done] = rv[static, 1:]
                keep = ~static
                rows = rows[keep]
                if rows.size == 0:
                    break
                x, v, a, D = x[keep], v[keep], a[keep], D[keep]
                frozen, cs, rv = frozen[keep], cs[keep], rv[keep]

    if rows.size:
        out_cs[rows] = cs[:, 1:]
        out_rv[rows] = rv[:, 1:]
    return BatchOutcome(out_cs, out_rv)


def simulate_run(cfg: ScenarioConfig, follower_D: Sequence[float], recorder: Optional[Recorder] = None) -> IterationOutcome:
    return simulate_batch(cfg, [list(follower_D)], recorder=recorder).row(0)


class TrajectoryRecorder:
    """Collects one record per step per vehicle for a single run."""

    header = ("step", "vehicle", "x", "v", "a", "u", "u_sat", "frozen")

    def __init__(self):
        self.rows = []

    def __call__(self, k, x, v, a, u, ubar, frozen):
        for i in range(x.shape[1]):
            self.rows.append((k, i, x[0, i], v[0, i], a[0, i], u[0, i], ubar[0, i], bool(frozen[0, i])))

    def write(self, path, delimiter=","):
        with open(path, "w") as fh:
            fh.write(delimiter.join(self.header) + "\n")
            for k, i, *vals, fr in self.rows:
                nums = delimiter.join(f"{val:.10g}" for val in vals)
                fh.write(f"{k}{delimiter}{i}{delimiter}{nums}{delimiter}{int(fr)}\n")
