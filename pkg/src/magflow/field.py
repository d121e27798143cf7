"""Magnetic field densities on the octagon surface.

A field is the density ``f`` of the 2-form ``sigma = f * mu`` with respect to
the hyperbolic area form ``mu = dx ^ dy / y^2``.  Two families are provided:

* :class:`ConstantField` -- ``f = s`` everywhere.
* :class:`OscillatingField` -- ``f = s * (1 - A * bump)`` where the bump is
  ``(1 - u)^m`` for ``u = (cosh r - 1) / (cosh rho - 1) < 1`` and zero
  beyond, ``r`` being the distance to the bump center.  With ``A > 1`` the
  field is negative near the center.  The bump support sits inside the
  octagon, and the field is extended to the plane periodically under the
  octagon group.

Writing the bump in terms of ``cosh r`` makes its radial primitive
elementary, since ``sinh r dr = d(cosh r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CENTER, INRADIUS, HPoint, octagon_group, reduce_array, FuchsianGenus2

__all__ = ["ConstantField", "OscillatingField", "sigma_density", "SURFACE_AREA", "EULER_CHAR"]

EULER_CHAR = -2
SURFACE_AREA = -2.0 * math.pi * EULER_CHAR


@dataclass(frozen=True)
class ConstantField:
    s: float = 1.0
    kind: str = field(default="constant", init=False)

    @property
    def total_flux(self) -> float:
        return self.s * SURFACE_AREA

    @property
    def min_value(self) -> float:
        return self.s

    @property
    def max_value(self) -> float:
        return self.s

    @property
    def min_point(self) -> HPoint:
        return HPoint(0.0, 1.0)

    def density(self, z):
        return np.full(np.shape(z), float(self.s))

    def scalar_density(self, group=None):
        s = float(self.s)
        return lambda x, y: s

    def params(self) -> dict:
        return {"kind": "constant", "s": self.s}


@dataclass(frozen=True)
class OscillatingField:
    s: float = 1.0
    amplitude: float = 2.0
    radius: float = 1.2
    center: complex = CENTER
    order: int = 3
    kind: str = field(default="oscillating", init=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if self.order < 2:
            raise ValueError("bump order must be >= 2 for a C^1 field")
        off = 2.0 * math.asinh(abs(self.center - CENTER) / (2.0 * math.sqrt(self.center.imag)))
        if off + self.radius >= INRADIUS:
            raise ValueError("bump support must lie inside the octagon's inscribed disc")
        if self.s != 0 and self.total_flux <= 0:
            raise ValueError("oscillating field must have positive total flux")

    @property
    def cosh_gap(self) -> float:
        return math.cosh(self.radius) - 1.0

    @property
    def b_inf(self) -> float:
        """Value of the radial primitive outside the bump support."""
        return -self.s * self.amplitude * self.cosh_gap / (self.order + 1)

    @property
    def bump_flux(self) -> float:
        return 2.0 * math.pi * self.b_inf

    @property
    def total_flux(self) -> float:
        return self.s * SURFACE_AREA + self.bump_flux

    @property
    def min_value(self) -> float:
        return min(self.s * (1.0 - self.amplitude), self.s)

    @property
    def max_value(self) -> float:
        return max(self.s * (1.0 - self.amplitude), self.s)

    @property
    def min_point(self) -> HPoint:
        return HPoint.from_complex(self.center)

    def profile(self, q):
        """Bump profile as a function of ``q = cosh r - 1``."""
        u = np.minimum(np.asarray(q, dtype=float) / self.cosh_gap, 1.0)
        return (1.0 - u) ** self.order

    def radial_primitive(self, q):
        """``B`` with ``dB/dr = f_bump(r) sinh r``, ``B(0) = 0``; ``f_bump = -s A profile``."""
        u = np.minimum(np.asarray(q, dtype=float) / self.cosh_gap, 1.0)
        return self.b_inf * (1.0 - (1.0 - u) ** (self.order + 1))

    def radial_density(self, r):
        q = np.cosh(np.asarray(r, dtype=float)) - 1.0
        return self.s * (1.0 - self.amplitude * self.profile(q))

    def density(self, z, group: FuchsianGenus2 | None = None):
        z = np.asarray(z, dtype=complex)
        flat = z.ravel().copy()
        far = np.abs(flat - CENTER) ** 2 / flat.imag > 2.0 * (math.cosh(INRADIUS) - 1.0)
        if far.any():
            flat[far], _ = reduce_array(flat[far], group)
        c = self.center
        q = np.abs(flat - c) ** 2 / (2.0 * flat.imag * c.imag)
        out = self.s * (1.0 - self.amplitude * self.profile(q))
        return out.reshape(z.shape)

    def scalar_density(self, group: FuchsianGenus2 | None = None):
        """Fast scalar ``f(x, y)`` for the integrator.

        Keeps the current tile as a Mobius matrix so consecutive calls along
        a trajectory rarely need a full reduction.
        """
        group = group or octagon_group()
        s, amp, m = float(self.s), float(self.amplitude), int(self.order)
        gap = self.cosh_gap
        cx, cy = self.center.real, self.center.imag
        inscribed = 2.0 * (math.cosh(INRADIUS) - 1.0)
        tile = [1.0, 0.0, 0.0, 1.0]
        gens = [g.matrix for g in group.generators]
        centers = group.centers

        def reduce(z):
            a, b, c, d = tile
            mat = np.array([[a, b], [c, d]])
            for _ in range(10_000):
                d0 = abs(z - CENTER) ** 2
                dj = np.abs(z - centers) ** 2 / centers.imag
                j = int(np.argmin(dj))
                if dj[j] >= d0 * (1.0 - 1e-12):
                    break
                g = gens[(j + 4) % 8]
                z = (g[0, 0] * z + g[0, 1]) / (g[1, 0] * z + g[1, 1])
                mat = g @ mat
            tile[:] = [mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]]
            return z

        def f(x, y):
            a, b, c, d = tile
            if a == 1.0 and b == 0.0 and c == 0.0:
                zx, zy = x, y
            else:
                z = complex(x, y)
                w = (a * z + b) / (c * z + d)
                zx, zy = w.real, w.imag
            if (zx * zx + (zy - 1.0) ** 2) / zy > inscribed:
                w = reduce(complex(zx, zy))
                zx, zy = w.real, w.imag
            q = ((zx - cx) ** 2 + (zy - cy) ** 2) / (2.0 * zy * cy)
            if q >= gap:
                return s
            return s * (1.0 - amp * (1.0 - q / gap) ** m)

        return f

    def params(self) -> dict:
        return {
            "kind": "oscillating",
            "s": self.s,
            "amplitude": self.amplitude,
            "radius": self.radius,
            "center": [self.center.real, self.center.imag],
            "order": self.order,
        }


def sigma_density(p: HPoint, system) -> float:
    """Density of the magnetic form at ``p`` relative to the hyperbolic area form."""
    fld = getattr(system, "field", system)
    return float(fld.density(np.array([p.z]))[0])
