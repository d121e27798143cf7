"""Magnetic flow on the hyperbolic plane as an explicit second-order ODE.

Unit-speed conventions: a state is ``(x, y, vx, vy)`` with coordinate velocity
``(vx, vy)``; its energy is ``(vx^2 + vy^2) / (2 y^2)``.  The equation of
motion is

    nabla_t v = -f(q) J v,

with ``J`` the positive quarter turn.  In coordinates,

    ax = 2 vx vy / y + f vy
    ay = (vy^2 - vx^2) / y - f vx.

The sign makes orbits of a positive field turn clockwise, which is the
orientation for which closed orbits are critical points of the free-period
action with the capping-disc flux term (see ``magflow.action``).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .field import ConstantField, OscillatingField, EULER_CHAR
from .geometry import HPoint, TangentVec, FuchsianGenus2, octagon_group, dist, parallel_transport
from .quadrature import polygon_flux

__all__ = [
    "IntegrationError",
    "PreconditionError",
    "MagneticSystem",
    "FlowState",
    "Trajectory",
    "ode_rhs",
    "integrate",
    "closure_check",
    "small_orbit_period",
    "small_orbit_state",
    "liouville_action",
    "circle_orbit_period",
]


class IntegrationError(RuntimeError):
    """The numerical orbit left the upper half-plane."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class MagneticSystem:
    field: ConstantField | OscillatingField = dc_field(default_factory=ConstantField)
    k: Optional[float] = None
    group: FuchsianGenus2 = dc_field(default_factory=octagon_group, repr=False)

    def __post_init__(self):
        if self.k is not None and not self.k > 0:
            raise ValueError("energy k must be positive")

    @classmethod
    def constant(cls, s: float = 1.0, k: float | None = None) -> "MagneticSystem":
        return cls(ConstantField(s), k)

    @classmethod
    def oscillating(cls, s=1.0, amplitude=2.0, radius=1.2, center=1j, order=3, k=None):
        return cls(OscillatingField(s, amplitude, radius, complex(center), order), k)

    @property
    def s(self) -> float:
        return self.field.s

    @property
    def a_sigma(self) -> float:
        """Ratio of the total flux to the total curvature ``2 pi chi``."""
        return self.field.total_flux / (2.0 * math.pi * EULER_CHAR)

    def with_k(self, k: float) -> "MagneticSystem":
        return MagneticSystem(self.field, k, self.group)

    def density(self, z):
        return self.field.density(z)


@dataclass(frozen=True)
class FlowState:
    x: float
    y: float
    vx: float
    vy: float

    @classmethod
    def from_direction(cls, p: HPoint, angle: float, k: float) -> "FlowState":
        """State at ``p`` with energy ``k`` and Euclidean heading ``angle``."""
        speed = math.sqrt(2.0 * k) * p.y
        return cls(p.x, p.y, speed * math.cos(angle), speed * math.sin(angle))

    @property
    def point(self) -> HPoint:
        return HPoint(self.x, self.y)

    @property
    def velocity(self) -> TangentVec:
        return TangentVec(self.point, self.vx, self.vy)

    @property
    def energy(self) -> float:
        return 0.5 * (self.vx * self.vx + self.vy * self.vy) / (self.y * self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])


def _rhs(x, y, vx, vy, f):
    return vx, vy, 2.0 * vx * vy / y + f * vy, (vy * vy - vx * vx) / y - f * vx


def ode_rhs(state: FlowState, system: MagneticSystem) -> np.ndarray:
    """Time derivative of ``(x, y, vx, vy)``."""
    f = float(system.density(np.array([complex(state.x, state.y)]))[0])
    return np.array(_rhs(state.x, state.y, state.vx, state.vy, f))


def _rk4_step(x, y, vx, vy, h, f):
    k1 = _rhs(x, y, vx, vy, f(x, y))
    a = 0.5 * h
    x2, y2 = x + a * k1[0], y + a * k1[1]
    k2 = _rhs(x2, y2, vx + a * k1[2], vy + a * k1[3], f(x2, y2))
    x3, y3 = x + a * k2[0], y + a * k2[1]
    k3 = _rhs(x3, y3, vx + a * k2[2], vy + a * k2[3], f(x3, y3))
    x4, y4 = x + h * k3[0], y + h * k3[1]
    k4 = _rhs(x4, y4, vx + h * k3[2], vy + h * k3[3], f(x4, y4))
    c = h / 6.0
    return (
        c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    )


class _Stepper:
    """RK4 with compensated (Kahan) accumulation of the state increments.

    The compensation keeps round-off growth far below the O(dt^4) truncation
    drift, so the order of the method is visible in the energy error even at
    dt = 1e-3.
    """

    def __init__(self, state: FlowState, f: Callable[[float, float], float]):
        self.s = [state.x, state.y, state.vx, state.vy]
        self.c = [0.0, 0.0, 0.0, 0.0]
        self.f = f

    def step(self, h):
        inc = _rk4_step(*self.s, h, self.f)
        s, c = self.s, self.c
        for j in range(4):
            d = inc[j] - c[j]
            t = s[j] + d
            c[j] = (t - s[j]) - d
            s[j] = t
        if not s[1] > 0.0:
            raise IntegrationError("orbit left the upper half-plane; reduce dt")

    def trial(self, h):
        """State after a single step of size ``h`` without committing it."""
        inc = _rk4_step(*self.s, h, self.f)
        return [self.s[j] + inc[j] for j in range(4)]


def _project(sv, k):
    x, y, vx, vy = sv
    e = 0.5 * (vx * vx + vy * vy) / (y * y)
    sc = math.sqrt(k / e)
    return x, y, vx * sc, vy * sc


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, 4): x, y, vx, vy projected onto the energy shell
    energy_drift: np.ndarray  # relative energy error of the raw state, before projection
    dt: float
    k: float

    @property
    def total_time(self) -> float:
        return float(self.t[-1])

    @property
    def points(self) -> np.ndarray:
        return self.states[:, 0] + 1j * self.states[:, 1]

    def state(self, i: int) -> FlowState:
        return FlowState(*map(float, self.states[i]))

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.energy_drift)))

    @property
    def final_drift(self) -> float:
        return float(abs(self.energy_drift[-1]))

    def to_csv(self, path) -> None:
        cols = np.column_stack([self.t, self.states, self.energy_drift])
        with open(Path(path), "w", newline="\n") as fh:
            fh.write("t,x,y,vx,vy,energy_drift\n")
            for row in cols:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def to_binary(self, path) -> None:
        """Little-endian: b"MFTRAJ01", uint64 sample count, then rows of 6 float64."""
        cols = np.column_stack([self.t, self.states, self.energy_drift]).astype("<f8")
        with open(Path(path), "wb") as fh:
            fh.write(b"MFTRAJ01")
            fh.write(struct.pack("<Q", cols.shape[0]))
            fh.write(cols.tobytes())

    @staticmethod
    def read_binary(path) -> np.ndarray:
        raw = Path(path).read_bytes()
        if raw[:8] != b"MFTRAJ01":
            raise ValueError("not a trajectory file")
        (n,) = struct.unpack("<Q", raw[8:16])
        return np.frombuffer(raw[16:], dtype="<f8").reshape(n, 6)


def integrate(
    state: FlowState,
    system: MagneticSystem,
    t_end: float,
    dt: float,
    k: float | None = None,
    sample_every: int = 1,
) -> Trajectory:
    """Fixed-step RK4 integration.

    The propagated state is never modified; emitted samples are rescaled to
    speed ``sqrt(2k)`` and the pre-projection energy error is reported
    alongside each sample.
    """
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    k = state.energy if k is None else k
    n = int(round(t_end / dt))
    if n < 1:
        raise ValueError("t_end shorter than one step")
    f = system.field.scalar_density(system.group)
    st = _Stepper(state, f)
    ts, rows, drift = [0.0], [_project(st.s, k)], [(_energy(st.s) - k) / k]
    for i in range(1, n + 1):
        st.step(dt)
        if i % sample_every == 0 or i == n:
            ts.append(i * dt)
            rows.append(_project(st.s, k))
            drift.append((_energy(st.s) - k) / k)
    return Trajectory(np.array(ts), np.array(rows), np.array(drift), dt, k)


def _energy(sv):
    return 0.5 * (sv[2] * sv[2] + sv[3] * sv[3]) / (sv[1] * sv[1])


def _phase_gap(s0, s1):
    """Position distance and transported velocity mismatch (metric norms)."""
    p, q = complex(s0[0], s0[1]), complex(s1[0], s1[1])
    dpos = float(dist(p, q))
    v_t = parallel_transport(p, q, complex(s0[2], s0[3]))
    dvel = abs(complex(s1[2], s1[3]) - v_t) / q.imag
    return dpos, dvel


def closure_check(
    state: FlowState,
    system: MagneticSystem,
    horizon: float,
    dt: float = 1e-3,
    tol_pos: float = 1e-6,
    tol_vel: float = 1e-6,
) -> Optional[float]:
    """Prime period of the orbit through ``state`` in the universal cover, if any.

    Returns are detected as crossings of the line through the start point
    orthogonal to the initial velocity; each crossing time is refined by
    bisection on single sub-steps and accepted when both phase-space gaps are
    below tolerance.
    """
    f = system.field.scalar_density(system.group)
    s0 = (state.x, state.y, state.vx, state.vy)
    ux, uy = state.vx, state.vy

    def section(sv):
        return ux * (sv[0] - s0[0]) + uy * (sv[1] - s0[1])

    st = _Stepper(state, f)
    n = int(math.ceil(horizon / dt))
    left = False
    g_prev = 0.0
    away = max(100.0 * tol_pos, 1e-4)
    for i in range(n):
        base = list(st.s)
        st.step(dt)
        g = section(st.s)
        if not left:
            left = float(dist(complex(s0[0], s0[1]), complex(st.s[0], st.s[1]))) > away
        elif g_prev <= 0.0 < g:
            lo, hi = 0.0, dt
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                trial = _Stepper(FlowState(*base), f).trial(mid)
                if section(trial) > 0.0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-15 * max(1.0, i * dt):
                    break
            tau = 0.5 * (lo + hi)
            end = _Stepper(FlowState(*base), f).trial(tau)
            dpos, dvel = _phase_gap(s0, end)
            if dpos < tol_pos and dvel < tol_vel:
                return i * dt + tau
        g_prev = g
    return None


def circle_orbit_period(s: float, k: float) -> Optional[float]:
    """Period of the constant-field orbit: a circle of radius arcoth(|s|/sqrt(2k))."""
    speed = math.sqrt(2.0 * k)
    kappa = abs(s) / speed
    if kappa <= 1.0:
        return None
    r = math.atanh(1.0 / kappa)
    return 2.0 * math.pi * math.sinh(r) / speed


def _circle_radius(p0: HPoint, system: MagneticSystem, k: float, angle: float) -> float:
    """Radius ``r`` of the magnetic circle around ``p0``: ``coth r = |f| / sqrt(2k)``.

    ``f`` is sampled on the circle, so the circle is an exact orbit whenever
    the field is radially symmetric about ``p0``.
    """
    speed = math.sqrt(2.0 * k)

    def f_at(r):
        return float(system.density(np.array([_polar_point(p0, r, angle)]))[0])

    def g(r):
        return speed / math.tanh(r) - abs(f_at(r))

    hi = 1e-6
    while g(hi) > 0.0:
        hi *= 1.5
        if hi > 5.0:
            raise PreconditionError(f"no magnetic circle around p0 at k={k}")
    return brentq(g, 1e-12, hi, xtol=1e-15, rtol=1e-14)


def _polar_point(p0: HPoint, r: float, angle: float) -> complex:
    a = p0.z
    w = math.tanh(0.5 * r) * complex(math.cos(angle), math.sin(angle))
    return (a - w * a.conjugate()) / (1.0 - w)


def small_orbit_state(p0: HPoint, system: MagneticSystem, k: float, angle: float = 0.0) -> FlowState:
    """Initial state on the small magnetic circle centered at ``p0``."""
    f0 = float(system.density(np.array([p0.z]))[0])
    if f0 == 0.0:
        raise PreconditionError("field vanishes at p0")
    r = _circle_radius(p0, system, k, angle)
    a = p0.z
    w = math.tanh(0.5 * r) * complex(math.cos(angle), math.sin(angle))
    # positive fields turn clockwise, so the circle is run clockwise about p0
    dw = (-1j if f0 > 0 else 1j) * w / abs(w)
    dz = (a - a.conjugate()) / (1.0 - w) ** 2 * dw
    z = _polar_point(p0, r, angle)
    v = dz / abs(dz) * math.sqrt(2.0 * k) * z.imag
    return FlowState(z.real, z.imag, v.real, v.imag)


def small_orbit_period(p0: HPoint, system: MagneticSystem, k: float, dt: float = 1e-3, angle: float = 0.0):
    """Measured period of the small orbit around ``p0`` and the leading term ``2 pi / |f(p0)|``."""
    state = small_orbit_state(p0, system, k, angle)
    f0 = float(system.density(np.array([p0.z]))[0])
    lead = 2.0 * math.pi / abs(f0)
    period = closure_check(state, system, horizon=3.0 * lead, dt=dt)
    if period is None:
        raise PreconditionError(f"no closure near p0 at k={k}; k too large for the local field")
    return period, lead


def liouville_action(
    orbit: Trajectory,
    system: MagneticSystem,
    beta: Callable | None = None,
    a_sigma: float | None = None,
    normalized: bool = False,
    closure_tol: float = 1e-5,
) -> float:
    """Action of the invariant measure carried by a closed orbit.

    Integrates ``2k + beta(v) + a_sigma f`` in time over one period (or its time
    average when ``normalized``).  Without an explicit ``beta`` the term
    ``oint beta`` is evaluated through ``d beta = sigma - a_sigma * K mu`` as the
    flux of ``(f + a_sigma) mu`` over the disc the orbit bounds; this is
    independent of the choice of ``beta`` for contractible orbits.
    """
    start, end = orbit.states[0], orbit.states[-1]
    dpos, dvel = _phase_gap(start, end)
    if dpos > closure_tol or dvel > closure_tol:
        raise PreconditionError("liouville_action needs a closed orbit (use closure_check's period)")
    a_sigma = system.a_sigma if a_sigma is None else a_sigma
    k = orbit.k
    period = orbit.total_time
    z = orbit.points
    fvals = system.density(z)
    dens = 2.0 * k + a_sigma * fvals
    if beta is not None:
        cov = np.array([beta(p) for p in z])
        dens = dens + cov[:, 0] * orbit.states[:, 2] + cov[:, 1] * orbit.states[:, 3]
        total = float(np.trapezoid(dens, orbit.t))
    else:
        total = float(np.trapezoid(dens, orbit.t))
        poly = z[:-1]
        total += polygon_flux(poly, lambda p: system.density(p) + a_sigma)
    return total / period if normalized else total
