"""The free-period action on discretized loops.

For a loop with lifted points ``z_0 .. z_{N-1}`` (closing point ``g z_0``),
period ``T`` and edge time fractions ``tau_e`` the discrete action is

    S_k = sum_e d(z_e, z_{e+1})^2 / (2 tau_e T) + k T + Flux,

with ``d`` the hyperbolic distance.  For a geodesic polygon traversed at
constant speed on each edge the first term is exactly the kinetic action, and
it is invariant under isometries, so lifting and iterating do not change it.

Flux is the integral of ``sigma`` over a capping disc (contractible loops) or
over the cylinder to the class reference loop.  Both reduce to the flux
through a closed geodesic polygon in the plane, computed as follows:

* the constant part ``s * mu`` has primitive ``s dx / y``, and along a
  geodesic edge ``int dx / y = -(change of Euclidean tangent angle)``;
* each bump copy centered at ``c`` has the primitive ``B(r_c) dphi_c`` with
  ``B`` the radial primitive, smooth at ``c``.  On edges that stay outside the
  bump support ``B`` is the constant ``b_inf`` and the edge integral is the
  exact subtended angle; other edges use Gauss-Legendre nodes.  Copies whose
  support misses the polygon contribute ``2 pi b_inf`` times the winding
  number.

Gradients and Hessians come from JAX applied to this discrete functional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from functools import lru_cache, partial
from typing import Optional, Sequence

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402

from ..dynamics import MagneticSystem  # noqa: E402
from ..field import OscillatingField  # noqa: E402
from ..geometry import CENTER, INRADIUS, FuchsianGenus2, octagon_group, reduce_array  # noqa: E402
from .loops import ActionConvention, ConventionError, LoopPath  # noqa: E402

__all__ = [
    "ActionReport",
    "RefinementError",
    "action_Sk",
    "action_gradient",
    "action_hessian",
    "ode_residual",
    "closed_polygon_flux",
    "disc_flux_quadrature",
    "flux_of_homotopy",
    "LoopFunctional",
    "functional_for",
]

N_GL = 8
# circumradius of the regular octagon with vertex angle pi/4
_CIRCUMRADIUS = math.acosh(1.0 / math.tan(math.pi / 8.0) ** 2)
_MAX_TILES = 20_000


class RefinementError(ValueError):
    """Consecutive loops of a homotopy are further apart than the mesh bound."""


@dataclass(frozen=True)
class ActionReport:
    k: float
    T: float
    kinetic: float
    period_term: float
    flux: float
    total: float
    dSdT: float
    grad_norm: float
    cls: str

    def to_json(self) -> str:
        d = asdict(self)
        d["class"] = d.pop("cls")
        d.pop("period_term")
        body = ", ".join(
            f'"{key}": ' + (f"{val:.17g}" if isinstance(val, float) else json.dumps(val))
            for key, val in d.items()
        )
        return "{" + body + "}"


# ---------------------------------------------------------------------------
# bump copies near a polygon


def _mobius(m, z):
    return (m[..., 0, 0] * z + m[..., 0, 1]) / (m[..., 1, 0] * z + m[..., 1, 1])


def _dist(z1, z2):
    return 2.0 * np.arcsinh(np.abs(z1 - z2) / (2.0 * np.sqrt(z1.imag * z2.imag)))


def _winding(z, c):
    """Winding numbers of closed geodesic polygons ``z`` (Q, V) around centers ``c``: (Q, C)."""
    w = (z[:, None, :] - c[None, :, None]) / (z[:, None, :] - np.conj(c)[None, :, None])
    ang = np.angle(np.roll(w, -1, axis=2) * np.conj(w))
    return np.rint(ang.sum(axis=2) / (2.0 * math.pi)).astype(int)


def _edge_bound(z, c):
    """Lower bound on the distance from centers to polygon edges, shape (Q, C, E)."""
    nxt = np.roll(z, -1, axis=1)
    dp = _dist(z[:, None, :], c[None, :, None])
    dq = _dist(nxt[:, None, :], c[None, :, None])
    length = _dist(z, nxt)[:, None, :]
    return np.maximum(0.5 * (dp + dq - length), 0.0)


def _key(m):
    m = m if m[0, 0] > 0 or (m[0, 0] == 0 and m[0, 1] > 0) else -m
    return tuple(np.round(m.ravel(), 7))


@dataclass(frozen=True)
class _FluxPlan:
    cx: np.ndarray  # (C,)
    cy: np.ndarray
    weight: np.ndarray  # (C,) 1 for real copies, 0 for padding
    near: np.ndarray  # (Q, C, E) use quadrature on this edge
    const: np.ndarray  # (Q,) 2 pi b_inf * winding of enclosed copies handled analytically


def _flux_plan(z: np.ndarray, fld, group: FuchsianGenus2) -> _FluxPlan:
    """Bump copies whose support meets any of the polygons ``z`` (Q, V).

    Tiles are visited by a flood fill from the tiles holding the vertices,
    expanding through every tile that may meet a polygon or is enclosed by one.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    rho = fld.radius
    c0 = complex(fld.center)
    _, mats = reduce_array(z.ravel(), group)
    gens = np.array([g.matrix for g in group.generators])
    todo = {}
    for m in mats:
        h = np.linalg.inv(m)
        todo.setdefault(_key(h), h)
    todo = list(todo.values())
    seen = set()
    near_c, near_mask = [], []
    const_wind = np.zeros(z.shape[0], dtype=int)
    while todo:
        fresh = []
        for h in todo:
            key = _key(h)
            if key not in seen:
                seen.add(key)
                fresh.append(h)
        todo = []
        if not fresh:
            break
        if len(seen) > _MAX_TILES:
            raise RuntimeError("polygons meet too many tiles")
        hs = np.array(fresh)
        copies = _mobius(hs, c0)
        tiles = _mobius(hs, CENTER)
        bound_c = _edge_bound(z, copies)
        wind_c = _winding(z, copies)
        bound_t = _edge_bound(z, tiles).min(axis=(0, 2))
        wind_t = np.abs(_winding(z, tiles)).sum(axis=0)
        for j, h in enumerate(hs):
            mask = bound_c[:, j, :] < rho + 1e-9
            if mask.any():
                near_c.append(copies[j])
                near_mask.append(mask)
            else:
                const_wind += wind_c[:, j]
            if bound_t[j] < _CIRCUMRADIUS + 1e-6 or wind_t[j]:
                todo.extend(h @ g for g in gens)
    C = len(near_c)
    size = 1 << max(0, (C - 1).bit_length()) if C else 1
    cx = np.zeros(size)
    cy = np.ones(size)
    weight = np.zeros(size)
    near = np.zeros((z.shape[0], size, z.shape[1]), dtype=bool)
    if C:
        arr = np.array(near_c)
        cx[:C], cy[:C], weight[:C] = arr.real, arr.imag, 1.0
        near[:, :C, :] = np.stack(near_mask, axis=1)
    return _FluxPlan(cx, cy, weight, near, 2.0 * math.pi * fld.b_inf * const_wind)


# ---------------------------------------------------------------------------
# JAX kernels


def _safe_sqrt(x):
    ok = x > 0.0
    return jnp.where(ok, jnp.sqrt(jnp.where(ok, x, 1.0)), 0.0)


def _dist2(x1, y1, x2, y2):
    """Squared hyperbolic distance, smooth at coincident points."""
    rho2 = ((x2 - x1) ** 2 + (y2 - y1) ** 2) / (4.0 * y1 * y2)
    ok = rho2 > 0.0
    rho = jnp.sqrt(jnp.where(ok, rho2, 1.0))
    return jnp.where(ok, 4.0 * jnp.arcsinh(rho) ** 2, 4.0 * rho2)


def _turning(x1, y1, x2, y2):
    """Change of the Euclidean tangent angle along the geodesic edge from 1 to 2."""
    dx = x2 - x1
    ux1, uy1 = 2.0 * y1 * dx, dx * dx + y2 * y2 - y1 * y1
    ux2, uy2 = 2.0 * y2 * dx, y2 * y2 - y1 * y1 - dx * dx
    cr = ux1 * uy2 - uy1 * ux2
    dt = ux1 * ux2 + uy1 * uy2
    ok = (cr * cr + dt * dt) > 0.0
    return jnp.where(ok, jnp.arctan2(jnp.where(ok, cr, 0.0), jnp.where(ok, dt, 1.0)), 0.0)


@lru_cache(maxsize=None)
def _gl_nodes(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _edge_geodesic(x1, y1, x2, y2, t):
    """Gauss nodes on geodesic edges, returned as (z, dz/dt) with shape (E, n)."""
    p = (x1 + 1j * y1)[:, None]
    q = (x2 + 1j * y2)[:, None]
    W = (q - p) / (q - jnp.conj(p))
    r2 = jnp.real(W * jnp.conj(W))
    ok = r2 > 1e-300
    r = jnp.sqrt(jnp.where(ok, r2, 0.25))
    a = jnp.arctanh(r)
    th = jnp.tanh(a * t)
    ratio = jnp.where(ok, th / r, t)
    dratio = jnp.where(ok, a * (1.0 - th * th) / r, 1.0)
    w = ratio * W
    dw = dratio * W
    z = (p - w * jnp.conj(p)) / (1.0 - w)
    dz = (p - jnp.conj(p)) / (1.0 - w) ** 2 * dw
    return z, dz


def _bump_flux(x, y, cx, cy, weight, near, const, b_inf, gap, order, n_gl):
    x2, y2 = jnp.roll(x, -1), jnp.roll(y, -1)
    z1 = (x + 1j * y)[None, :]
    z2 = (x2 + 1j * y2)[None, :]
    c = (cx + 1j * cy)[:, None]
    # exact subtended angle of each edge, seen from each center
    w1 = (z1 - c) / (z1 - jnp.conj(c))
    w2 = (z2 - c) / (z2 - jnp.conj(c))
    prod = w2 * jnp.conj(w1)
    re, im = jnp.real(prod), jnp.imag(prod)
    ok = (re * re + im * im) > 0.0
    dphi = jnp.where(ok, jnp.arctan2(jnp.where(ok, im, 0.0), jnp.where(ok, re, 1.0)), 0.0)
    exact = b_inf * dphi
    # quadrature of B dphi on edges that meet a bump support
    t, wt = _gl_nodes(n_gl)
    zq, dzq = _edge_geodesic(x, y, x2, y2, jnp.asarray(t))
    cc = c[:, :, None]
    wq = (zq[None] - cc) / (zq[None] - jnp.conj(cc))
    dwq = (cc - jnp.conj(cc)) / (zq[None] - jnp.conj(cc)) ** 2 * dzq[None]
    m2 = jnp.real(wq * jnp.conj(wq))
    u = 2.0 * m2 / ((1.0 - m2) * gap)
    inside = u < 1.0
    one_u = jnp.where(inside, 1.0 - u, 0.0)
    geo = sum(one_u**j for j in range(order + 1))
    h_in = (b_inf / gap) * 2.0 / (1.0 - m2) * geo
    h_out = b_inf / jnp.where(inside, 1.0, m2)
    h = jnp.where(inside, h_in, h_out)
    integrand = h * jnp.imag(jnp.conj(wq) * dwq)
    quad = jnp.sum(integrand * jnp.asarray(wt), axis=-1)
    per_edge = jnp.where(near, quad, exact)
    return jnp.sum(weight * jnp.sum(per_edge, axis=1)) + const


def _polygon_flux_jax(x, y, s, bump):
    x2, y2 = jnp.roll(x, -1), jnp.roll(y, -1)
    total = -s * jnp.sum(_turning(x, y, x2, y2))
    if bump is not None:
        total = total + _bump_flux(x, y, *bump)
    return total


def _apply(m, x, y):
    z = x + 1j * y
    w = (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
    return jnp.real(w), jnp.imag(w)


# ---------------------------------------------------------------------------
# evaluator


class LoopFunctional:
    """Discrete ``S_k`` for loops of one class and size, with JAX derivatives.

    Variables are packed as ``(x_0 .. x_{N-1}, y_0 .. y_{N-1}, T)``.
    """

    def __init__(
        self,
        system: MagneticSystem,
        k: float,
        n: int,
        word=(),
        weights=None,
        reference: LoopPath | None = None,
        n_gl: int = N_GL,
    ):
        self.system = system
        self.k = float(k)
        self.n = int(n)
        self.group = system.group
        self.word = tuple(word)
        self.weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        self.n_gl = int(n_gl)
        fld = system.field
        self.bumpy = isinstance(fld, OscillatingField) and fld.amplitude != 0.0 and fld.s != 0.0
        self.deck = self.group.word_isometry(self.word).matrix if self.word else None
        if self.word and reference is None:
            raise ConventionError("non-contractible loops need a reference loop")
        self.reference = reference
        if reference is not None:
            ref_closed = reference.closed_points(self.group)
            # polygon tail: g r_0, r_{N'-1}, ..., r_0
            tail = np.concatenate([[ref_closed[-1]], ref_closed[-2::-1]])
            self._tail = (tail.real.copy(), tail.imag.copy())
        else:
            self._tail = None
        self._compiled = {}

    # -- polygon assembly -------------------------------------------------
    def _vertices_np(self, z):
        if self.deck is None:
            return z
        g = self.deck
        gz0 = (g[0, 0] * z[0] + g[0, 1]) / (g[1, 0] * z[0] + g[1, 1])
        tail = self._tail[0] + 1j * self._tail[1]
        return np.concatenate([z, [gz0], tail])

    def _plan(self, z):
        if not self.bumpy:
            return None
        fld = self.system.field
        p = _flux_plan(self._vertices_np(z)[None, :], fld, self.group)
        return p

    def _terms(self, v, k, plan_arrays):
        n = self.n
        x, y, T = v[:n], v[n : 2 * n], v[2 * n]
        if self.deck is None:
            xe, ye = x, y
            px, py = x, y
        else:
            g = jnp.asarray(self.deck)
            gx, gy = _apply(g, x[0], y[0])
            xe = jnp.append(x, gx)
            ye = jnp.append(y, gy)
            px = jnp.concatenate([xe, jnp.asarray(self._tail[0])])
            py = jnp.concatenate([ye, jnp.asarray(self._tail[1])])
        if self.deck is None:
            d2 = _dist2(x, y, jnp.roll(x, -1), jnp.roll(y, -1))
        else:
            d2 = _dist2(xe[:-1], ye[:-1], xe[1:], ye[1:])
        kinetic = jnp.sum(d2 / jnp.asarray(self.weights)) / (2.0 * T)
        fld = self.system.field
        if plan_arrays is None:
            bump = None
        else:
            bump = (*plan_arrays, fld.b_inf, fld.cosh_gap, int(fld.order), self.n_gl)
        flux = _polygon_flux_jax(px, py, float(fld.s), bump)
        return kinetic, k * T, flux

    def _fn(self, kind, shape_key):
        key = (kind, shape_key)
        if key not in self._compiled:

            def total(v, k, *plan):
                kin, per, flux = self._terms(v, k, plan if plan else None)
                return kin + per + flux

            def terms(v, k, *plan):
                return jnp.stack(self._terms(v, k, plan if plan else None))

            batch_axes = (0, None) + ((None, None, None, 0, 0) if shape_key is not None else ())
            makers = {
                "terms": lambda: terms,
                "value": lambda: total,
                "grad": lambda: jax.value_and_grad(total),
                "hess": lambda: jax.hessian(total),
                "bvalue": lambda: jax.vmap(total, in_axes=batch_axes),
                "bgrad": lambda: jax.vmap(jax.value_and_grad(total), in_axes=batch_axes),
            }
            self._compiled[key] = jax.jit(makers[kind]())
        return self._compiled[key]

    def _check(self, V):
        n = self.n
        if np.any(V[..., n : 2 * n] <= 0) or np.any(~(V[..., 2 * n] > 0)):
            raise ValueError("loop left the half-plane or period is not positive")

    def _call(self, kind, v):
        v = np.asarray(v, dtype=float)
        self._check(v)
        n = self.n
        k = jnp.asarray(self.k)
        plan = self._plan(v[:n] + 1j * v[n : 2 * n])
        if plan is None:
            return self._fn(kind, None)(jnp.asarray(v), k)
        args = (plan.cx, plan.cy, plan.weight, plan.near[0], plan.const[0])
        return self._fn(kind, plan.near.shape[1:])(jnp.asarray(v), k, *[jnp.asarray(a) for a in args])

    def _call_batch(self, kind, V):
        V = np.asarray(V, dtype=float)
        self._check(V)
        n = self.n
        k = jnp.asarray(self.k)
        if not self.bumpy:
            return self._fn(kind, None)(jnp.asarray(V), k)
        polys = np.stack([self._vertices_np(row[:n] + 1j * row[n : 2 * n]) for row in V])
        p = _flux_plan(polys, self.system.field, self.group)
        args = (p.cx, p.cy, p.weight, p.near, p.const)
        return self._fn(kind, p.near.shape[1:])(jnp.asarray(V), k, *[jnp.asarray(a) for a in args])

    def with_k(self, k: float) -> "LoopFunctional":
        """Same functional at another energy, sharing compiled kernels."""
        other = object.__new__(LoopFunctional)
        other.__dict__.update(self.__dict__)
        other.k = float(k)
        return other

    # -- public -------------------------------------------------------------
    @staticmethod
    def pack(loop: LoopPath) -> np.ndarray:
        return np.concatenate([loop.points.real, loop.points.imag, [loop.period]])

    def unpack(self, v, template: LoopPath | None = None) -> LoopPath:
        n = self.n
        pts = np.asarray(v[:n]) + 1j * np.asarray(v[n : 2 * n])
        ref_id = template.reference_id if template is not None else "point"
        return LoopPath(pts, float(v[2 * n]), self.word, self.weights, ref_id)

    def terms(self, v):
        return tuple(float(t) for t in self._call("terms", v))

    def value(self, v) -> float:
        return float(self._call("value", v))

    def value_and_grad(self, v):
        val, g = self._call("grad", v)
        return float(val), np.asarray(g)

    def hessian(self, v) -> np.ndarray:
        return np.asarray(self._call("hess", v))

    def batch_value(self, V) -> np.ndarray:
        return np.asarray(self._call_batch("bvalue", V))

    def batch_value_and_grad(self, V):
        vals, grads = self._call_batch("bgrad", V)
        return np.asarray(vals), np.asarray(grads)

    def residual(self, v, grad=None) -> float:
        """Largest pointwise Euler-Lagrange defect, in acceleration units."""
        if grad is None:
            _, grad = self.value_and_grad(v)
        n = self.n
        y = np.asarray(v[n : 2 * n])
        dual = y * np.hypot(grad[:n], grad[n : 2 * n])
        T = float(v[2 * n])
        return float(np.max(dual / (self.weights * T)))

    def grad_norm(self, v, grad=None) -> float:
        if grad is None:
            _, grad = self.value_and_grad(v)
        n = self.n
        y = np.asarray(v[n : 2 * n])
        T = float(v[2 * n])
        dual2 = y**2 * (grad[:n] ** 2 + grad[n : 2 * n] ** 2)
        return float(math.sqrt(np.sum(dual2 / (self.weights * T)) + grad[2 * n] ** 2))


_FUNCTIONALS: dict = {}


def _functional_for(loop: LoopPath, system: MagneticSystem, k: float, convention: ActionConvention | None):
    ref = None
    if not loop.contractible:
        if convention is None:
            raise ConventionError(f"class {loop.class_label} needs an action convention")
        ref = convention.reference_for(loop.word, system.group)
    return functional_for(system, k, loop.n, loop.word, loop.weights, ref)


def functional_for(system: MagneticSystem, k: float, n: int, word=(), weights=None, reference=None) -> LoopFunctional:
    """Cached :class:`LoopFunctional`; compiled kernels are reused across energies."""
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    ref_key = None if reference is None else (reference.points.tobytes(), reference.word, reference.weights.tobytes())
    key = (system.field, id(system.group), n, tuple(word), w.tobytes(), ref_key)
    fn = _FUNCTIONALS.get(key)
    if fn is None:
        if len(_FUNCTIONALS) > 64:
            _FUNCTIONALS.clear()
        fn = LoopFunctional(system, k, n, word, w, reference)
        _FUNCTIONALS[key] = fn
    return fn.with_k(k)


def action_Sk(loop: LoopPath, system: MagneticSystem, k: float, convention: ActionConvention | None = None) -> ActionReport:
    """Discrete free-period action of ``loop`` at energy ``k``."""
    fn = _functional_for(loop, system, k, convention)
    v = fn.pack(loop)
    kin, per, flux = fn.terms(v)
    _, g = fn.value_and_grad(v)
    total = kin + per + flux
    return ActionReport(
        k=float(k),
        T=float(loop.period),
        kinetic=kin,
        period_term=per,
        flux=flux,
        total=total,
        dSdT=float(k) - kin / loop.period,
        grad_norm=fn.grad_norm(v, g),
        cls=loop.class_label,
    )


def action_gradient(loop: LoopPath, system: MagneticSystem, k: float, convention: ActionConvention | None = None):
    """Exact gradient of the discrete action.

    Returns the point gradient as ``N`` tangent vectors (metric gradients,
    ``y^2`` times the coordinate partials, as complex numbers) and ``dS/dT``.
    """
    fn = _functional_for(loop, system, k, convention)
    _, g = fn.value_and_grad(fn.pack(loop))
    n = loop.n
    y2 = loop.points.imag**2
    return y2 * (g[:n] + 1j * g[n : 2 * n]), float(g[2 * n])


def action_hessian(loop: LoopPath, system: MagneticSystem, k: float, convention: ActionConvention | None = None) -> np.ndarray:
    fn = _functional_for(loop, system, k, convention)
    return fn.hessian(fn.pack(loop))


def ode_residual(loop: LoopPath, system: MagneticSystem, k: float, convention: ActionConvention | None = None) -> float:
    fn = _functional_for(loop, system, k, convention)
    return fn.residual(fn.pack(loop))


# ---------------------------------------------------------------------------
# flux helpers


@partial(jax.jit, static_argnames=("order", "n_gl"))
def _bump_batch(xs, ys, s, cx, cy, wt, near, const, b_inf, gap, order, n_gl):
    def one(x, y, nr, cn):
        return _polygon_flux_jax(x, y, s, (cx, cy, wt, nr, cn, b_inf, gap, order, n_gl))

    return jax.vmap(one)(xs, ys, near, const)


@jax.jit
def _plain_batch(xs, ys, s):
    return jax.vmap(lambda x, y: _polygon_flux_jax(x, y, s, None))(xs, ys)


def _batch_flux(polys: np.ndarray, system: MagneticSystem, n_gl: int = N_GL) -> np.ndarray:
    polys = np.atleast_2d(np.asarray(polys, dtype=complex))
    fld = system.field
    xs, ys = jnp.asarray(polys.real), jnp.asarray(polys.imag)
    s = float(fld.s)
    if not (isinstance(fld, OscillatingField) and fld.amplitude != 0.0 and fld.s != 0.0):
        return np.asarray(_plain_batch(xs, ys, s))
    p = _flux_plan(polys, fld, system.group)
    out = _bump_batch(xs, ys, s, p.cx, p.cy, p.weight, p.near, p.const,
                      fld.b_inf, fld.cosh_gap, int(fld.order), int(n_gl))
    return np.asarray(out)


def closed_polygon_flux(z, system: MagneticSystem, n_gl: int = N_GL) -> float:
    """Signed flux of ``sigma`` through the closed geodesic polygon ``z``."""
    return float(_batch_flux(np.asarray(z, dtype=complex).ravel()[None, :], system, n_gl)[0])


def disc_flux_quadrature(loop: LoopPath, system: MagneticSystem, n_edge: int = 16, n_radial: int = 24) -> float:
    """Capping-disc flux by fan triangulation against the field density.

    Independent of the line-integral route used by :func:`action_Sk`; the two
    agree to quadrature accuracy and exactly (to round-off) for constant fields.
    """
    from ..quadrature import polygon_flux

    if not loop.contractible:
        raise ValueError("disc flux needs a contractible loop")
    z = loop.points
    fld = system.field
    if not isinstance(fld, OscillatingField):
        return float(fld.s) * polygon_flux(z, None, n_edge=n_edge)
    return polygon_flux(z, lambda p: fld.density(p, system.group), n_edge=n_edge, n_radial=n_radial)


def flux_of_homotopy(
    loop_a: LoopPath,
    loop_b: LoopPath,
    intermediates: Sequence[LoopPath] = (),
    system: MagneticSystem | None = None,
    mesh: float = 0.5,
) -> float:
    """Flux of ``sigma`` through the cylinder swept by ``a -> intermediates -> b``.

    Each pair of consecutive loops bounds a strip of geodesic quadrilaterals
    ``(p_i, p_{i+1}, q_{i+1}, q_i)``; the panels are oriented so that the total
    is ``Flux(b) - Flux(a)`` for contractible loops.
    """
    system = system or MagneticSystem()
    chain = [loop_a, *intermediates, loop_b]
    n, word = loop_a.n, loop_a.word
    for lp in chain:
        if lp.n != n or lp.word != word:
            raise ValueError("homotopy loops must share size and class")
    total = 0.0
    for a, b in zip(chain[:-1], chain[1:]):
        pa, pb = a.closed_points(system.group), b.closed_points(system.group)
        gap = float(np.max(_dist(pa, pb)))
        if gap > mesh:
            raise RefinementError(f"consecutive loops {gap:.3g} apart exceeds mesh bound {mesh:.3g}")
        quads = np.stack([pa[:-1], pa[1:], pb[1:], pb[:-1]], axis=1)
        total -= float(np.sum(_batch_flux(quads, system)))
    return total
