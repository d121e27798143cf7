"""Flux of a density over geodesic polygons in the upper half-plane.

A closed polygon with vertices ``z_0 .. z_{N-1}`` and geodesic edges is fanned
from an apex ``a``.  Each fan triangle is integrated in hyperbolic polar
coordinates around the apex (``mu = sinh r dr dphi``), with Gauss-Legendre
nodes along the geodesic edge and along each radius.  Triangles carry the sign
of ``dphi``, so the sum is the winding-number weighted integral and does not
need a convex polygon.
"""

from __future__ import annotations

import numpy as np

__all__ = ["polygon_flux", "polygon_area", "geodesic_points", "polygon_length"]


def _gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _to_disk(z, a):
    return (z - a) / (z - np.conj(a))


def _from_disk(w, a):
    return (a - w * np.conj(a)) / (1.0 - w)


def _edge_nodes(w1, w2, t):
    """Points and parameter derivatives along disk geodesics from w1 to w2.

    ``w1``, ``w2`` have shape (E,), ``t`` shape (n,); results have shape (E, n).
    """
    v2 = (w2 - w1) / (1.0 - np.conj(w1) * w2)
    rho = np.abs(v2)
    safe = np.where(rho > 0, rho, 1.0)
    e = np.where(rho > 0, v2 / safe, 1.0)
    a = np.arctanh(rho)
    th = np.tanh(np.outer(a, t))
    v = th * e[:, None]
    dv = (a[:, None] * (1.0 - th**2)) * e[:, None]
    w1c = w1[:, None]
    w = (v + w1c) / (1.0 + np.conj(w1c) * v)
    dw = (1.0 - np.abs(w1c) ** 2) / (1.0 + np.conj(w1c) * v) ** 2 * dv
    return w, dw


def geodesic_points(z1: complex, z2: complex, t) -> np.ndarray:
    """Points at fractions ``t`` of the hyperbolic distance from ``z1`` to ``z2``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    w2 = _to_disk(np.array([z2]), z1)
    w, _ = _edge_nodes(np.array([0.0 + 0.0j]), w2, t)
    return _from_disk(w[0], z1)


def polygon_length(z) -> float:
    z = np.asarray(z, dtype=complex)
    nxt = np.roll(z, -1)
    chord = np.abs(nxt - z)
    return float(np.sum(2.0 * np.arcsinh(chord / (2.0 * np.sqrt(z.imag * nxt.imag)))))


def _default_apex(z):
    return complex(np.mean(z.real), np.mean(z.imag))


def polygon_area(z, apex=None, n_edge: int = 12) -> float:
    """Signed hyperbolic area enclosed by the geodesic polygon ``z``."""
    return polygon_flux(z, None, apex=apex, n_edge=n_edge)


def polygon_flux(z, density=None, apex=None, n_edge: int = 12, n_radial: int = 16) -> float:
    """Signed integral of ``density * mu`` over the geodesic polygon ``z``.

    ``density`` maps an array of complex points to values; ``None`` means the
    constant 1, for which the radial integral is exact (``cosh r - 1``).
    """
    z = np.asarray(z, dtype=complex).ravel()
    a = _default_apex(z) if apex is None else complex(apex)
    w = _to_disk(z, a)
    w1, w2 = w, np.roll(w, -1)
    t, wt = _gl(n_edge)
    pts, dpts = _edge_nodes(w1, w2, t)
    mod2 = np.abs(pts) ** 2
    ok = mod2 > 1e-300
    dphi = np.where(ok, np.imag(np.conj(pts) * dpts) / np.where(ok, mod2, 1.0), 0.0)
    # hyperbolic radius of each edge node from the apex: cosh r - 1 = 2|w|^2/(1-|w|^2)
    cosh_m1 = 2.0 * mod2 / (1.0 - mod2)
    if density is None:
        inner = cosh_m1
    else:
        r_edge = 2.0 * np.arctanh(np.sqrt(mod2))
        s, ws = _gl(n_radial)
        r = r_edge[..., None] * s
        phase = np.where(ok, pts / np.sqrt(np.where(ok, mod2, 1.0)), 1.0)
        wn = np.tanh(0.5 * r) * phase[..., None]
        vals = np.asarray(density(_from_disk(wn, a).ravel()), dtype=float).reshape(r.shape)
        inner = np.sum(vals * np.sinh(r) * ws, axis=-1) * r_edge
    return float(np.sum(dphi * inner * wt))
