"""Taimanov functional and estimators for the critical energy values.

``T_k(Sigma) = sqrt(2k) * length(boundary) + flux(Sigma)`` for embedded regions
``Sigma`` with positively oriented boundary.  Its negativity threshold over a
family of discs centered at the field minimum is a lower bound for the
Taimanov value ``tau_plus``; the Mane value is estimated from the closed/open
transition of the constant-curvature orbits, or from large lifted discs when the
field is not constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ..dynamics import FlowState, MagneticSystem, closure_check
from ..field import ConstantField
from ..geometry import INRADIUS, HPoint
from ..quadrature import polygon_length
from .functional import closed_polygon_flux
from .loops import LoopPath, circle_loop

__all__ = [
    "EmbeddingError",
    "ManeEstimate",
    "TauPlusStar",
    "taimanov_Tk",
    "disc_taimanov",
    "estimate_tau_plus",
    "estimate_mane",
    "tau_plus_star",
    "elementary_estimate_gap",
]


class EmbeddingError(ValueError):
    """A region boundary intersects itself or another boundary component."""


def _klein(z, base=1j):
    w = (z - base) / (z - np.conj(base))
    return 2.0 * w / (1.0 + np.abs(w) ** 2)


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Proper crossings between segments (p1, p2) and (q1, q2), broadcasting."""

    def orient(a, b, c):
        return np.sign(((b - a) * np.conj(c - a)).imag)

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def _check_embedded(curves: Sequence[np.ndarray]) -> None:
    # geodesic edges are straight in the Klein model
    segs = []
    for cid, z in enumerate(curves):
        kz = _klein(np.asarray(z, dtype=complex))
        nxt = np.roll(kz, -1)
        for i in range(kz.size):
            segs.append((cid, i, kz.size, kz[i], nxt[i]))
    if not segs:
        return
    cid = np.array([s[0] for s in segs])
    idx = np.array([s[1] for s in segs])
    size = np.array([s[2] for s in segs])
    a = np.array([s[3] for s in segs])
    b = np.array([s[4] for s in segs])
    cross = _segments_cross(a[:, None], b[:, None], a[None, :], b[None, :])
    same = cid[:, None] == cid[None, :]
    gap = np.abs(idx[:, None] - idx[None, :])
    adjacent = same & ((gap <= 1) | (gap == size[:, None] - 1))
    if np.any(cross & ~adjacent):
        raise EmbeddingError("region boundary is not embedded")


def taimanov_Tk(
    boundaries: Sequence[LoopPath | np.ndarray],
    region: str,
    system: MagneticSystem,
    k: float,
) -> float:
    """Taimanov functional of a region given by oriented boundary polygons.

    ``region`` is ``"empty"``, ``"whole"`` (the closed surface, no boundary),
    ``"disc"`` (one counterclockwise boundary) or ``"annulus"`` (outer
    counterclockwise, inner clockwise).
    """
    if k < 0:
        raise ValueError("energy must be nonnegative")
    if region == "empty":
        return 0.0
    if region == "whole":
        return float(system.field.total_flux)
    expected = {"disc": 1, "annulus": 2}
    if region not in expected:
        raise ValueError(f"unknown region kind {region!r}")
    curves = [b.points if isinstance(b, LoopPath) else np.asarray(b, dtype=complex) for b in boundaries]
    if len(curves) != expected[region]:
        raise ValueError(f"a {region} needs {expected[region]} boundary curve(s)")
    _check_embedded(curves)
    length = sum(polygon_length(z) for z in curves)
    flux = sum(closed_polygon_flux(z, system) for z in curves)
    return math.sqrt(2.0 * k) * length + flux


def disc_taimanov(system: MagneticSystem, k: float, radius: float, center: complex | None = None, n: int = 256) -> float:
    """``T_k`` of the geodesic disc of the given radius (a fine inscribed polygon)."""
    c = system.field.min_point.z if center is None else complex(center)
    lp = circle_loop(c, radius, n, 1.0)
    return taimanov_Tk([lp], "disc", system, k)


def _disc_ratio(system, radius, center, n, either_sign=False):
    lp = circle_loop(center, radius, n, 1.0)
    flux = closed_polygon_flux(lp.points, system)
    if flux >= 0.0 and not either_sign:
        return 0.0
    return 0.5 * (flux / polygon_length(lp.points)) ** 2


def estimate_tau_plus(
    system: MagneticSystem,
    radii: Sequence[float] | None = None,
    n: int = 256,
    offsets: Sequence[complex] = (0.0,),
) -> float:
    """Negativity threshold of ``T_k`` over discs centered near the field minimum.

    For a fixed disc ``T_k < 0`` exactly when ``k < flux^2 / (2 length^2)`` with
    negative flux, so bisection in ``k`` reduces to maximizing that ratio over
    the family; the grid maximum is polished by a bounded scalar search.
    """
    fld = system.field
    if fld.min_value >= 0.0:
        return 0.0
    c0 = fld.min_point.z
    rmax = INRADIUS - 1e-3
    radii = np.linspace(0.02, rmax, 40) if radii is None else np.asarray(radii, dtype=float)
    best = 0.0
    for off in offsets:
        center = c0 + off
        vals = np.array([_disc_ratio(system, r, center, n) for r in radii])
        j = int(np.argmax(vals))
        if vals[j] <= 0.0:
            continue
        lo = radii[max(j - 1, 0)]
        hi = radii[min(j + 1, len(radii) - 1)]
        res = minimize_scalar(lambda r: -_disc_ratio(system, r, center, n), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        best = max(best, vals[j], -float(res.fun))
    return best


def elementary_estimate_gap(length, T, k):
    """``k T + length^2 / (2T) - sqrt(2k) length``; nonnegative, zero at ``T = length / sqrt(2k)``."""
    length, T, k = np.asarray(length), np.asarray(T), np.asarray(k)
    return k * T + length**2 / (2.0 * T) - np.sqrt(2.0 * k) * length


@dataclass(frozen=True)
class ManeEstimate:
    analytic_upper: Optional[float]
    dynamical: float
    bracket: tuple
    method: str


def _closes(system, k, horizon, dt):
    state = FlowState.from_direction(HPoint(0.0, 1.0), 0.0, k)
    return closure_check(state, system, horizon=horizon, dt=dt) is not None


def estimate_mane(
    system: MagneticSystem,
    grid_step: float = 0.02,
    horizon: float = 200.0,
    dt: float = 5e-3,
    k_max: float | None = None,
) -> ManeEstimate:
    """Analytic upper bound and dynamical estimate of the Mane critical value.

    The analytic bound is ``sup |theta|^2 / 2 = s^2 / 2`` for the primitive
    ``theta = s dx / y`` and is only available for constant fields.  For those
    the dynamical estimate is the midpoint of the grid cell where orbits stop
    closing.  For other fields it is the largest ``k`` at which a lifted disc
    around the field minimum (radius up to 5, either orientation) still has
    negative action, a lower estimate.
    """
    fld = system.field
    s = float(fld.s)
    if s == 0.0 and fld.min_value == 0.0:
        return ManeEstimate(0.0, 0.0, (0.0, 0.0), "exact")
    if isinstance(fld, ConstantField):
        upper = 0.5 * s * s
        top = k_max if k_max is not None else 2.0 * upper + grid_step
        grid = grid_step * np.arange(1, int(round(top / grid_step)) + 1)
        last_closed = 0.0
        for kk in grid:
            if _closes(system, float(kk), horizon, dt):
                last_closed = float(kk)
            else:
                return ManeEstimate(upper, 0.5 * (last_closed + kk), (last_closed, float(kk)), "closure")
        return ManeEstimate(upper, float(grid[-1]), (float(grid[-1]), math.inf), "closure")
    radii = np.linspace(0.1, 5.0, 50)
    c0 = fld.min_point.z
    vals = [_disc_ratio(system, r, c0, 512, either_sign=True) for r in radii]
    j = int(np.argmax(vals))
    return ManeEstimate(None, float(vals[j]), (float(vals[j]), math.inf), "lifted-discs")


@dataclass(frozen=True)
class TauPlusStar:
    value: float
    tau_plus: float
    mane: float


def tau_plus_star(system: MagneticSystem, mane: ManeEstimate | None = None, tau_plus: float | None = None) -> TauPlusStar:
    tp = estimate_tau_plus(system) if tau_plus is None else tau_plus
    me = estimate_mane(system) if mane is None else mane
    return TauPlusStar(min(tp, me.dynamical), tp, me.dynamical)
