"""String-stability feasibility of the multi-predecessor CACC gains.

Two independent routes are provided: the closed-form admissible region for
``(kv, kp)`` and a dense frequency sweep of ``|r H(jw)|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleGainsError

#: Slack applied when comparing region margins against zero.
FEASIBILITY_TOL = 1e-12
#: Slack applied to the unit bound on the peak gain.
HINF_TOL = 1e-6


@dataclass(frozen=True)
class GainSet:
    ka: float
    kv: float
    kp: float
    r: int
    hw: float

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be an integer >= 1, got {self.r!r}")
        if self.hw <= 0:
            raise ValueError(f"hw must be positive, got {self.hw!r}")
        for name in ("ka", "kv", "kp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        object.__setattr__(self, "r", int(self.r))

    def with_r(self, r: int) -> "GainSet":
        return GainSet(self.ka, self.kv, self.kp, r, self.hw)


@dataclass(frozen=True)
class ScaledGains:
    kta: float
    ktv: float
    ktp: float
    htw: float


@dataclass(frozen=True)
class PlantParams:
    tau: float = 0.5
    tau0: float = 0.5

    def __post_init__(self):
        if not 0 < self.tau <= self.tau0:
            raise ValueError(f"need 0 < tau <= tau0, got tau={self.tau}, tau0={self.tau0}")


@dataclass(frozen=True)
class TransferFunction:
    """Spacing-error propagation ``H(s) = N(s)/D(s)``; coefficients highest power first."""

    num: tuple[float, float, float]
    den: tuple[float, float, float, float]

    @property
    def gamma(self) -> float:
        return self.den[2]

    def __call__(self, s):
        s = np.asarray(s)
        return np.polyval(self.num, s) / np.polyval(self.den, s)


@dataclass(frozen=True)
class RegionReport:
    feasible: bool
    margin1: float
    margin2: float


@dataclass(frozen=True)
class RegionBoundary:
    """Closed boundary of the admissible ``(kv, kp)`` region in unscaled gains."""

    points: np.ndarray
    diagnostic: str | None = None

    @property
    def empty(self) -> bool:
        return len(self.points) == 0


@dataclass(frozen=True)
class HinfResult:
    max_gain: float
    arg_omega: float

    @property
    def passed(self) -> bool:
        return self.max_gain <= 1.0 + HINF_TOL


def scale_gains(g: GainSet) -> ScaledGains:
    return ScaledGains(g.r * g.ka, g.r * g.kv, g.r * g.kp, (g.r + 1) / 2 * g.hw)


def unscale_gains(s: ScaledGains, r: int) -> GainSet:
    """Inverse of :func:`scale_gains` for a fixed predecessor count."""
    return GainSet(s.kta / r, s.ktv / r, s.ktp / r, r, 2 * s.htw / (r + 1))


def _check_kta(kta: float) -> None:
    if not 0 < kta < 1:
        raise InfeasibleGainsError(f"scaled acceleration gain r*ka = {kta:g} must lie in (0, 1)")


def headway_lower_bound(tau0: float, ka: float, r: int) -> float:
    """Infimum of time headways that admit a nonempty (kv, kp) region."""
    _check_kta(r * ka)
    return 4 * tau0 / ((1 + r) * (1 + r * ka))


def _region_constants(kta: float, htw: float, tau0: float):
    a1 = (1 - kta**2) / (2 * tau0)
    b1 = (1 - kta**2) / (2 * tau0 * htw)
    a2 = (1 - kta) / htw
    b2 = 2 * (1 - kta) / htw**2
    return a1, b1, a2, b2


def region_check(g: GainSet, tau0: float) -> RegionReport:
    """Evaluate both linear inequalities of the admissible region.

    ``margin1 = 1 - (ktv/a1 + ktp/b1)`` and ``margin2 = ktv/a2 + ktp/b2 - 1``;
    the gains are feasible iff both margins are non-negative (boundary included).
    """
    s = scale_gains(g)
    _check_kta(s.kta)
    a1, b1, a2, b2 = _region_constants(s.kta, s.htw, tau0)
    margin1 = 1 - (s.ktv / a1 + s.ktp / b1)
    margin2 = (s.ktv / a2 + s.ktp / b2) - 1
    feasible = margin1 >= -FEASIBILITY_TOL and margin2 >= -FEASIBILITY_TOL
    return RegionReport(feasible, margin1, margin2)


def _sample_edge(p, q, samples):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    return (1 - t) * np.asarray(p) + t * np.asarray(q)


def region_boundary(ka: float, r: int, hw: float, tau0: float, samples: int = 100) -> RegionBoundary:
    """Sample the closed boundary of the admissible region, in unscaled ``(kv, kp)``.

    The boundary is traced along the lower line from its upper end down to the
    kv axis, along the kv axis, then up the upper line, and back down the kp
    axis when the region reaches it. Each edge gets ``samples`` points.
    """
    kta = r * ka
    _check_kta(kta)
    htw = (r + 1) / 2 * hw
    a1, b1, a2, b2 = _region_constants(kta, htw, tau0)
    if a1 <= a2:
        bound = headway_lower_bound(tau0, ka, r)
        return RegionBoundary(
            np.empty((0, 2)),
            f"empty admissible region: hw={hw:g} is not above the lower bound {bound:.6g} s for r={r}",
        )

    if b1 > b2:
        vertices = [(0.0, b2), (a2, 0.0), (a1, 0.0), (0.0, b1)]
        closed = True
    else:
        # lines cross inside the quadrant
        m = np.array([[1 / a1, 1 / b1], [1 / a2, 1 / b2]])
        cross = tuple(np.linalg.solve(m, np.ones(2)))
        vertices = [cross, (a2, 0.0), (a1, 0.0), cross]
        closed = False

    edges = [_sample_edge(vertices[k], vertices[k + 1], samples) for k in range(3)]
    if closed:
        edges.append(_sample_edge(vertices[3], vertices[0], samples))
    pts = np.vstack(edges) / r
    return RegionBoundary(pts)


def transfer_function(g: GainSet, tau: float) -> TransferFunction:
    gamma = g.r * g.kv + g.r * g.kp * (g.r + 1) / 2 * g.hw
    return TransferFunction((g.ka, g.kv, g.kp), (tau, 1.0, gamma, g.r * g.kp))


def hinf_check(
    tf: TransferFunction,
    r: int,
    omega_max: float = 1e4,
    grid: int = 100_000,
    omega_min: float = 1e-3,
) -> HinfResult:
    """Peak of ``|r H(jw)|`` over ``w = 0`` plus a log-spaced grid up to ``omega_max``."""
    omega = np.concatenate(([0.0], np.logspace(np.log10(omega_min), np.log10(omega_max), grid)))
    mag = np.abs(r * tf(1j * omega))
    k = int(np.argmax(mag))
    return HinfResult(float(mag[k]), float(omega[k]))
