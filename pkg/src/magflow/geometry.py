"""Upper half-plane model of the hyperbolic plane and the genus-2 octagon group.

Points are stored either as :class:`HPoint` values or, in vectorized code, as
complex numbers ``z = x + iy`` with ``y > 0``.  The metric is
``(dx^2 + dy^2) / y^2`` and the area form is ``dx ^ dy / y^2``.

The regular octagon with vertex angle pi/4 is built in the Poincare disk
(centered at the origin) and moved to the half-plane by the Cayley map
``w = (z - i) / (z + i)``, which sends the octagon center to ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "DomainError",
    "ReductionError",
    "HPoint",
    "TangentVec",
    "Isometry",
    "FuchsianGenus2",
    "metric_inner",
    "metric_norm",
    "covector_norm",
    "theta_primitive",
    "hyperbolic_distance",
    "dist",
    "rotate90",
    "parallel_transport",
    "octagon_group",
    "reduce_to_domain",
    "reduce_array",
    "CENTER",
    "INRADIUS",
]

CENTER = 1j
# Distance from the octagon center to a side midpoint: cosh(d) = cot(pi/8).
INRADIUS = math.acosh(1.0 + math.sqrt(2.0))
# Side pairings a0 a5 a2 a7 a4 a1 a6 a3 = 1, where a_{j+4} = a_j^{-1}.
RELATOR = (0, 5, 2, 7, 4, 1, 6, 3)


class DomainError(ValueError):
    """A point or vector lies outside the upper half-plane."""


class ReductionError(RuntimeError):
    """Reduction to the fundamental domain did not terminate."""


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (self.y > 0.0) or not math.isfinite(self.x) or not math.isfinite(self.y):
            raise DomainError(f"point ({self.x}, {self.y}) is not in the upper half-plane")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(float(z.real), float(z.imag))


@dataclass(frozen=True)
class TangentVec:
    base: HPoint
    vx: float
    vy: float

    @property
    def w(self) -> complex:
        return complex(self.vx, self.vy)


def metric_inner(u: TangentVec, v: TangentVec) -> float:
    """Bilinear form of the hyperbolic metric on two vectors at the same base."""
    if u.base != v.base:
        raise DomainError("vectors are based at different points")
    y = u.base.y
    return (u.vx * v.vx + u.vy * v.vy) / (y * y)


def metric_norm(v: TangentVec) -> float:
    return math.hypot(v.vx, v.vy) / v.base.y


def covector_norm(p: HPoint, cov) -> float:
    """Dual-metric norm of a covector ``(a, b)`` meaning ``a dx + b dy`` at ``p``."""
    return p.y * math.hypot(cov[0], cov[1])


def theta_primitive(p: HPoint, s: float) -> np.ndarray:
    """Components of ``s dx / y``, a bounded primitive of ``s`` times the area form."""
    return np.array([s / p.y, 0.0])


def rotate90(v: TangentVec) -> TangentVec:
    """Positive quarter turn in the fiber; conformality makes it a metric isometry."""
    return TangentVec(v.base, -v.vy, v.vx)


def dist(z1, z2):
    """Vectorized hyperbolic distance between complex points."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    chord = np.abs(z1 - z2)
    return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(z1.imag * z2.imag)))


def hyperbolic_distance(p: HPoint, q: HPoint) -> float:
    chord = math.hypot(p.x - q.x, p.y - q.y)
    return 2.0 * math.asinh(chord / (2.0 * math.sqrt(p.y * q.y)))


def parallel_transport(p: complex, q: complex, v: complex) -> complex:
    """Transport the coordinate vector ``v`` at ``p`` to ``q`` along the geodesic.

    Uses the hyperbolic translation along the geodesic through ``p`` and ``q``;
    its differential is the Levi-Civita transport along that geodesic.
    """
    if p == q:
        return v
    m = _translation_from_to(p, q)
    return v * m.derivative(p)


def _translation_from_to(p: complex, q: complex) -> "Isometry":
    # Send p to i, move i to q' along the imaginary axis, then undo.
    to_i = Isometry(1.0 / math.sqrt(p.imag), -p.real / math.sqrt(p.imag), 0.0, math.sqrt(p.imag))
    q1 = to_i(q)
    # Rotation about i taking q1 onto the positive imaginary axis.
    w = (q1 - 1j) / (q1 + 1j)
    phi = -math.atan2(w.imag, w.real)
    rot = _rotation_about_i(phi)
    q2 = rot(q1)
    t = q2.imag
    sq = math.sqrt(t)
    scale = Isometry(sq, 0.0, 0.0, 1.0 / sq)
    return to_i.inverse() @ rot.inverse() @ scale @ rot @ to_i


def _rotation_about_i(phi: float) -> "Isometry":
    # Disk rotation w -> e^{i phi} w written in the half-plane.
    c, s = math.cos(phi / 2.0), math.sin(phi / 2.0)
    return Isometry(c, s, -s, c)


@dataclass(frozen=True)
class Isometry:
    """Orientation-preserving isometry ``z -> (a z + b) / (c z + d)``, ``ad - bc = 1``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > 1e-12 * max(1.0, abs(self.a * self.d), abs(self.b * self.c)):
            raise DomainError(f"Mobius coefficients have determinant {det!r}, expected 1")

    @classmethod
    def from_matrix(cls, m) -> "Isometry":
        m = np.asarray(m, dtype=float)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det <= 0:
            raise DomainError("matrix does not act on the upper half-plane")
        m = m / math.sqrt(det)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def __call__(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivative(self, z):
        return 1.0 / (self.c * z + self.d) ** 2

    def apply_point(self, p: HPoint) -> HPoint:
        return HPoint.from_complex(self(p.z))

    def apply_vector(self, v: TangentVec) -> TangentVec:
        z = v.base.z
        w = self.derivative(z) * v.w
        return TangentVec(HPoint.from_complex(self(z)), w.real, w.imag)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return Isometry.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "Isometry":
        return Isometry(self.d, -self.b, -self.c, self.a)

    @property
    def trace(self) -> float:
        return self.a + self.d

    def is_hyperbolic(self) -> bool:
        return abs(self.trace) > 2.0


IDENTITY = Isometry(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class FuchsianGenus2:
    """Side pairings of the regular octagon; ``generators[j + 4]`` inverts ``generators[j]``."""

    generators: tuple
    relator: tuple = RELATOR

    def relator_residual(self) -> float:
        prod = np.eye(2)
        for letter in self.relator:
            prod = prod @ self.generators[letter].matrix
        # PSL(2,R): the product may equal -1.
        return float(min(np.linalg.norm(prod - np.eye(2)), np.linalg.norm(prod + np.eye(2))))

    @cached_property
    def centers(self) -> np.ndarray:
        """Images of the octagon center under the eight generators."""
        return np.array([g(CENTER) for g in self.generators])

    def word_isometry(self, word) -> Isometry:
        """Isometry that applies the letters of ``word`` in order (first letter first)."""
        m = IDENTITY
        for letter in word:
            m = self.generators[letter] @ m
        return m

    def contains(self, z, tol: float = 1e-12) -> bool:
        """Closed Dirichlet domain test at ``i``."""
        z = complex(z)
        d0 = abs(z - CENTER) ** 2
        for c in self.centers:
            # cosh d - 1 = |z - c|^2 / (2 y Im c)
            if abs(z - c) ** 2 / c.imag < d0 * (1.0 - tol):
                return False
        return True

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "a", "b", "c", "d"])
            for j, g in enumerate(self.generators):
                w.writerow([j] + [f"{v:.17g}" for v in (g.a, g.b, g.c, g.d)])


def _disk_side_pairing(j: int) -> np.ndarray:
    # Translation by twice the inradius along the direction j*pi/4, in SU(1,1).
    ang = j * math.pi / 4.0
    half = INRADIUS
    rot = np.diag([np.exp(0.5j * ang), np.exp(-0.5j * ang)])
    trans = np.array([[math.cosh(half), math.sinh(half)], [math.sinh(half), math.cosh(half)]])
    return rot @ trans @ np.linalg.inv(rot)


@lru_cache(maxsize=None)
def octagon_group(tol: float = 1e-8) -> FuchsianGenus2:
    cayley = np.array([[1.0, -1.0j], [1.0, 1.0j]])
    gens = []
    for j in range(8):
        m = np.linalg.inv(cayley) @ _disk_side_pairing(j) @ cayley
        m = m / np.sqrt(np.linalg.det(m))
        if np.abs(m.imag).max() > 1e-12:
            raise DomainError("side pairing is not a real Mobius map")
        gens.append(Isometry.from_matrix(m.real))
    group = FuchsianGenus2(tuple(gens))
    residual = group.relator_residual()
    if residual > tol:
        raise DomainError(f"octagon relator residual {residual:.3e} exceeds {tol:.1e}")
    return group


def reduce_to_domain(p: HPoint, group: FuchsianGenus2 | None = None, max_iter: int = 10_000):
    """Move ``p`` into the closed octagon.

    Returns the reduced point and the word of generator letters applied, in
    order.  Each step applies the inverse of the generator whose image of the
    center is closest to the current point, which strictly decreases the
    distance to the center.
    """
    group = group or octagon_group()
    z = p.z
    centers = group.centers
    word = []
    for _ in range(max_iter):
        d0 = abs(z - CENTER) ** 2
        dj = np.abs(z - centers) ** 2 / centers.imag
        j = int(np.argmin(dj))
        if dj[j] >= d0 * (1.0 - 1e-12):
            return HPoint.from_complex(z), tuple(word)
        inv = (j + 4) % 8
        z = group.generators[inv](z)
        word.append(inv)
    raise ReductionError(f"reduction of {p} did not finish in {max_iter} steps")


def reduce_array(z, group: FuchsianGenus2 | None = None, max_iter: int = 10_000):
    """Vectorized reduction of complex points; returns reduced points and 2x2 matrices.

    The matrices ``m`` satisfy ``reduced = m . z`` as Mobius maps.
    """
    group = group or octagon_group()
    z = np.array(z, dtype=complex, copy=True).ravel()
    mats = np.broadcast_to(np.eye(2), (z.size, 2, 2)).copy()
    centers = group.centers
    gmats = np.array([g.matrix for g in group.generators])
    for _ in range(max_iter):
        d0 = np.abs(z - CENTER) ** 2
        dj = np.abs(z[:, None] - centers[None, :]) ** 2 / centers.imag[None, :]
        j = np.argmin(dj, axis=1)
        move = dj[np.arange(z.size), j] < d0 * (1.0 - 1e-12)
        if not move.any():
            return z, mats
        inv = (j[move] + 4) % 8
        g = gmats[inv]
        zm = z[move]
        z[move] = (g[:, 0, 0] * zm + g[:, 0, 1]) / (g[:, 1, 0] * zm + g[:, 1, 1])
        mats[move] = g @ mats[move]
    raise ReductionError(f"array reduction did not finish in {max_iter} steps")
