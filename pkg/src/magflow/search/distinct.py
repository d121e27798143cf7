"""Geometric comparison of closed orbits on the surface."""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..geometry import CENTER, FuchsianGenus2, octagon_group, reduce_array
from ..action.loops import LoopPath

__all__ = ["surface_hausdorff", "distinct", "neighbour_tiles"]

_CIRCUMRADIUS = math.acosh(1.0 / math.tan(math.pi / 8.0) ** 2)


@lru_cache(maxsize=4)
def _neighbours(group: FuchsianGenus2) -> np.ndarray:
    """Matrices of every tile meeting the closed octagon (center within two circumradii)."""
    gm = np.array([g.matrix for g in group.generators])
    limit = 2.0 * _CIRCUMRADIUS + 1e-6
    found = {(): np.eye(2)}
    frontier = [((), np.eye(2))]
    while frontier:
        nxt = []
        for word, m in frontier:
            for j in range(8):
                if word and (word[-1] + 4) % 8 == j:
                    continue
                m2 = m @ gm[j]
                c = (m2[0, 0] * CENTER + m2[0, 1]) / (m2[1, 0] * CENTER + m2[1, 1])
                d = math.acosh(1.0 + abs(c - CENTER) ** 2 / (2.0 * c.imag * CENTER.imag))
                if d > limit:
                    continue
                if any(np.allclose(m2, v, atol=1e-9) or np.allclose(m2, -v, atol=1e-9) for v in found.values()):
                    continue
                found[word + (j,)] = m2
                nxt.append((word + (j,), m2))
        frontier = nxt
    return np.array(list(found.values()))


def neighbour_tiles(group: FuchsianGenus2 | None = None) -> int:
    return len(_neighbours(group or octagon_group()))


def _cosh_dist(p, q):
    return 1.0 + np.abs(p[:, None] - q[None, :]) ** 2 / (2.0 * p.imag[:, None] * q.imag[None, :])


def _directed(a, b, mats):
    copies = (mats[:, 0, 0, None] * b[None, :] + mats[:, 0, 1, None]) / (mats[:, 1, 0, None] * b[None, :] + mats[:, 1, 1, None])
    ch = _cosh_dist(a, copies.ravel())
    return float(np.arccosh(np.max(np.min(ch, axis=1))))


def _as_loop(x) -> LoopPath:
    # critical points carry their loop; plain loops pass through
    return getattr(x, "loop", x)


def surface_hausdorff(a, b, group: FuchsianGenus2 | None = None) -> float:
    """Hausdorff distance between the sampled images of two loops on the surface."""
    group = group or octagon_group()
    a, b = _as_loop(a), _as_loop(b)
    ra, _ = reduce_array(a.points, group)
    rb, _ = reduce_array(b.points, group)
    mats = _neighbours(group)
    return max(_directed(ra, rb, mats), _directed(rb, ra, mats))


def _max_edge(loop: LoopPath, group) -> float:
    z = loop.closed_points(group)
    return float(np.max(2.0 * np.arcsinh(np.abs(np.diff(z)) / (2.0 * np.sqrt(z[:-1].imag * z[1:].imag)))))


def _commensurable(Ta: float, Tb: float, max_den: int = 12, rtol: float = 1e-3) -> bool:
    r = Ta / Tb
    f = Fraction(r).limit_denominator(max_den)
    return abs(float(f) - r) <= rtol * r


def distinct(a, b, group: FuchsianGenus2 | None = None, delta: float = 1e-2) -> bool:
    """Whether two loops are geometrically different closed orbits.

    Time shifts, reversal and iteration do not change the traced set, so two
    loops count as the same orbit when their images are Hausdorff-close on the
    surface (tolerance ``delta`` or twice the coarser sampling step) and their
    periods are in a small rational ratio.
    """
    group = group or octagon_group()
    a, b = _as_loop(a), _as_loop(b)
    tol = max(delta, 2.0 * max(_max_edge(a, group), _max_edge(b, group)))
    if surface_hausdorff(a, b, group) > tol:
        return True
    return not _commensurable(a.period, b.period)
