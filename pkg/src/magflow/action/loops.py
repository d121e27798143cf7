"""Discretized loops in the universal cover and their class bookkeeping.

A loop is stored as ``N`` lifted points ``z_0 .. z_{N-1}``.  The closing point
is ``g . z_0`` for the deck transformation ``g`` of its class (the identity for
contractible loops), and consecutive points are joined by geodesic edges.
Edge ``e`` runs from ``z_e`` to ``z_{e+1}`` and takes the fraction ``tau_e`` of
the period; uniform loops have ``tau_e = 1 / N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..geometry import FuchsianGenus2, Isometry, IDENTITY, octagon_group

__all__ = [
    "ConventionError",
    "LoopPath",
    "ActionConvention",
    "free_reduce",
    "iterate_loop",
    "concatenate",
    "reverse_loop",
    "circle_loop",
    "point_loop",
    "resample_loop",
]

MIN_POINTS = 8


class ConventionError(LookupError):
    """No reference loop is stored for a non-contractible class."""


def free_reduce(word) -> Tuple[int, ...]:
    """Cancel adjacent letter pairs ``j, j+4`` (a generator and its inverse)."""
    out = []
    for letter in word:
        letter = int(letter)
        if not 0 <= letter < 8:
            raise ValueError(f"generator letter {letter} out of range")
        if out and (out[-1] + 4) % 8 == letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


@dataclass(frozen=True)
class LoopPath:
    points: np.ndarray
    period: float
    word: Tuple[int, ...] = ()
    weights: Optional[np.ndarray] = None
    reference_id: str = "point"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        if pts.size < MIN_POINTS:
            raise ValueError(f"a loop needs at least {MIN_POINTS} points")
        if not np.all(pts.imag > 0):
            raise ValueError("loop points must lie in the upper half-plane")
        if not self.period > 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "word", free_reduce(self.word))
        if self.weights is None:
            w = np.full(pts.size, 1.0 / pts.size)
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.size != pts.size or np.any(w <= 0):
                raise ValueError("edge weights must be positive, one per edge")
            w = w / w.sum()
        object.__setattr__(self, "weights", w)
        if self.reference_id == "point" and self.word:
            object.__setattr__(self, "reference_id", "class:" + ",".join(map(str, self.word)))

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def contractible(self) -> bool:
        return not self.word

    @property
    def class_label(self) -> str:
        return "contractible" if self.contractible else "word:" + "".join(map(str, self.word))

    def deck(self, group: FuchsianGenus2 | None = None) -> Isometry:
        if not self.word:
            return IDENTITY
        return (group or octagon_group()).word_isometry(self.word)

    def closing_point(self, group: FuchsianGenus2 | None = None) -> complex:
        return complex(self.deck(group)(self.points[0]))

    def closed_points(self, group: FuchsianGenus2 | None = None) -> np.ndarray:
        """Points with the closing point appended (``N + 1`` entries)."""
        return np.append(self.points, self.closing_point(group))

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=0, atol=1e-15))

    def with_points(self, points, period: float | None = None) -> "LoopPath":
        return LoopPath(points, self.period if period is None else period, self.word, self.weights, self.reference_id)


def iterate_loop(loop: LoopPath, n: int, group: FuchsianGenus2 | None = None) -> LoopPath:
    """The ``n``-fold iterate: ``nN`` points, period ``nT``, class ``word^n``."""
    if n < 1:
        raise ValueError("iteration order must be >= 1")
    if n == 1:
        return loop
    g = loop.deck(group)
    chunks, cur = [], loop.points
    for _ in range(n):
        chunks.append(cur)
        cur = g(cur) if loop.word else cur
    ref = loop.reference_id if loop.contractible else f"{loop.reference_id}^{n}"
    return LoopPath(np.concatenate(chunks), n * loop.period, loop.word * n, np.tile(loop.weights, n), ref)


def concatenate(a: LoopPath, b: LoopPath, tol: float = 1e-12) -> LoopPath:
    """Time concatenation of two contractible loops sharing their first point."""
    if not (a.contractible and b.contractible):
        raise ValueError("concatenation is defined here for contractible loops only")
    if abs(a.points[0] - b.points[0]) > tol * max(1.0, abs(a.points[0])):
        raise ValueError("loops do not share a basepoint")
    T = a.period + b.period
    w = np.concatenate([a.weights * a.period, b.weights * b.period]) / T
    return LoopPath(np.concatenate([a.points, b.points]), T, (), w)


def reverse_loop(loop: LoopPath, group: FuchsianGenus2 | None = None) -> LoopPath:
    """Same curve run backwards, starting at the same point."""
    if loop.contractible:
        pts = np.concatenate([loop.points[:1], loop.points[:0:-1]])
        w = loop.weights[::-1]
        return LoopPath(pts, loop.period, (), w)
    ginv = loop.deck(group).inverse()
    closed = loop.closed_points(group)
    pts = ginv(closed[::-1][:-1])
    inv_word = tuple((c + 4) % 8 for c in reversed(loop.word))
    return LoopPath(pts, loop.period, inv_word, loop.weights[::-1])


def circle_loop(center: complex, radius: float, n: int, period: float, clockwise: bool = False, phase: float = 0.0) -> LoopPath:
    """Uniformly sampled hyperbolic circle, counterclockwise unless ``clockwise``."""
    t = phase + 2.0 * math.pi * np.arange(n) / n
    if clockwise:
        t = -t
    w = math.tanh(0.5 * radius) * np.exp(1j * t)
    c = complex(center)
    return LoopPath((c - w * c.conjugate()) / (1.0 - w), period)


def point_loop(p: complex, n: int, period: float) -> LoopPath:
    return LoopPath(np.full(n, complex(p)), period)


def resample_loop(loop: LoopPath, n: int, group: FuchsianGenus2 | None = None) -> LoopPath:
    """Re-discretize at ``n`` points spaced uniformly in hyperbolic arclength."""
    from ..quadrature import geodesic_points

    closed = loop.closed_points(group)
    d = 2.0 * np.arcsinh(np.abs(np.diff(closed)) / (2.0 * np.sqrt(closed[:-1].imag * closed[1:].imag)))
    cum = np.concatenate([[0.0], np.cumsum(d)])
    if cum[-1] == 0.0:
        return LoopPath(np.full(n, closed[0]), loop.period, loop.word)
    targets = cum[-1] * np.arange(n) / n
    out = np.empty(n, dtype=complex)
    for i, s in enumerate(targets):
        e = min(int(np.searchsorted(cum, s, side="right")) - 1, len(d) - 1)
        frac = 0.0 if d[e] == 0 else (s - cum[e]) / d[e]
        out[i] = geodesic_points(closed[e], closed[e + 1], frac)[0]
    return LoopPath(out, loop.period, loop.word, None, loop.reference_id)


@dataclass
class ActionConvention:
    """Reference loops per free homotopy class, write-once.

    The trivial class uses the constant loop and needs no entry.  A class
    ``word^n`` whose primitive ``word`` is registered uses the ``n``-fold
    iterate of the stored reference, which makes the action of iterates
    exactly additive.
    """

    references: Dict[Tuple[int, ...], LoopPath] = field(default_factory=dict)

    def register(self, ref: LoopPath) -> None:
        if ref.contractible:
            raise ValueError("the trivial class always uses the constant loop")
        if ref.word in self.references:
            raise ValueError(f"class {ref.class_label} already has a reference loop")
        self.references[ref.word] = ref

    def reference_for(self, word, group: FuchsianGenus2 | None = None) -> Optional[LoopPath]:
        word = free_reduce(word)
        if not word:
            return None
        if word in self.references:
            return self.references[word]
        for base, ref in self.references.items():
            n, r = divmod(len(word), len(base))
            if r == 0 and base * n == word:
                return iterate_loop(ref, n, group)
        raise ConventionError(f"no reference loop stored for class {''.join(map(str, word))}")

    def offset(self, word) -> float:
        """The constant ``b(class, n)``; zero by construction of the references."""
        self.reference_for(word)
        return 0.0
