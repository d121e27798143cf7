"""Local minimization of the discrete action, Morse data and trace classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..action.functional import LoopFunctional, _functional_for
from ..action.loops import ActionConvention, LoopPath, resample_loop
from ..dynamics import FlowState, MagneticSystem, integrate
from ..geometry import dist

__all__ = [
    "SearchSettings",
    "TraceRecord",
    "CriticalPoint",
    "MorseData",
    "PSVerdict",
    "find_local_min",
    "refine_critical",
    "morse_index",
    "palais_smale_monitor",
    "shooting_defect",
]


@dataclass(frozen=True)
class SearchSettings:
    tol_g: float = 1e-7
    tol_r: float = 1e-6
    T_min: float = 1e-3
    T_max: float = 1e3
    max_iter: int = 200
    reparam_every: int = 0
    eps_idx: float = 1e-6


@dataclass(frozen=True)
class TraceRecord:
    value: float
    period: float
    grad_norm: float
    residual: float
    step: float


@dataclass
class CriticalPoint:
    loop: LoopPath
    k: float
    value: float
    ode_residual: float
    dSdT: float
    grad_norm: float
    index: int = -1
    nullity: int = -1
    kind: str = "other"
    converged: bool = False
    classification: str = "unclassified"
    trace: List[TraceRecord] = field(default_factory=list, repr=False)

    def dossier(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "T": self.loop.period,
            "value": self.value,
            "residual": self.ode_residual,
            "dSdT": self.dSdT,
            "index": self.index,
            "nullity": self.nullity,
            "classification": self.classification,
            "converged": self.converged,
            "class": self.loop.class_label,
            "points": [[p.real, p.imag] for p in self.loop.points],
        }

    def to_json(self) -> str:
        return json.dumps(_round17(self.dossier()))


def _round17(obj):
    # json's float repr is already shortest round-trip; this keeps ints/bools untouched
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round17(v) for v in obj]
    return obj


@dataclass(frozen=True)
class MorseData:
    index: int
    nullity: int
    rotation_in_kernel: bool
    eigenvalues: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.index
        yield self.nullity


@dataclass(frozen=True)
class PSVerdict:
    label: str  # converged | shrinking | escaping | inconsistent | unconverged
    detail: str


# ---------------------------------------------------------------------------


def _modified_newton(H, g, floor):
    lam, V = np.linalg.eigh(H)
    scale = max(np.abs(lam).max(), 1e-300)
    lam2 = np.maximum(np.abs(lam), floor * scale)
    return -V @ ((V.T @ g) / lam2)


def _clamp_period(fn: LoopFunctional, v, settings):
    n = fn.n
    hit = False
    if v[2 * n] < settings.T_min:
        v = v.copy()
        v[2 * n] = settings.T_min
        hit = True
    return v, hit


def _finish(fn, v, k, trace, kind, converged, classification, template) -> CriticalPoint:
    val, g = fn.value_and_grad(v)
    return CriticalPoint(
        loop=fn.unpack(v, template),
        k=float(k),
        value=val,
        ode_residual=fn.residual(v, g),
        dSdT=float(g[2 * fn.n]),
        grad_norm=fn.grad_norm(v, g),
        kind=kind,
        converged=converged,
        classification=classification,
        trace=trace,
    )


def find_local_min(
    seed: LoopPath,
    system: MagneticSystem,
    k: float,
    settings: SearchSettings = SearchSettings(),
    convention: ActionConvention | None = None,
    with_index: bool = True,
) -> CriticalPoint:
    """Descend from ``seed`` to a local minimizer of the discrete action.

    Each step is a Newton step with the Hessian eigenvalues replaced by their
    absolute values (a descent direction), followed by backtracking until the
    action strictly decreases.  The period is kept above ``T_min``; reaching
    the floor or ``T_max`` ends the run and the trace is classified.
    """
    if not k > 0:
        raise ValueError("energy must be positive")
    fn = _functional_for(seed, system, k, convention)
    v = fn.pack(seed)
    trace: List[TraceRecord] = []
    floor_hits = 0
    for it in range(settings.max_iter):
        val, g = fn.value_and_grad(v)
        res = fn.residual(v, g)
        gn = fn.grad_norm(v, g)
        trace.append(TraceRecord(val, float(v[-1]), gn, res, 0.0 if not trace else trace[-1].step))
        if gn < settings.tol_g and res < settings.tol_r:
            break
        if v[-1] >= settings.T_max:
            break
        if floor_hits >= 3:
            break
        d = _modified_newton(fn.hessian(v), g, 1e-10)
        step, accepted = 1.0, False
        while step > 1e-14:
            cand, hit = _clamp_period(fn, v + step * d, settings)
            try:
                cval = fn.value(cand)
            except ValueError:
                cval = math.inf
            if cval < val:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Newton direction exhausted; try a plain metric gradient step
            n = fn.n
            y2 = np.concatenate([v[n : 2 * n] ** 2] * 2 + [[1.0]])
            d = -y2 * g
            step = 1.0 / max(np.abs(d).max(), 1e-300) * 1e-3
            while step > 1e-18:
                cand, hit = _clamp_period(fn, v + step * d, settings)
                try:
                    cval = fn.value(cand)
                except ValueError:
                    cval = math.inf
                if cval < val:
                    accepted = True
                    break
                step *= 0.5
        if not accepted:
            break
        assert cval < val, "descent step increased the action"
        floor_hits = floor_hits + 1 if hit else 0
        v = cand
        trace[-1] = TraceRecord(trace[-1].value, trace[-1].period, trace[-1].grad_norm, trace[-1].residual, step)
        if settings.reparam_every and (it + 1) % settings.reparam_every == 0:
            lp = resample_loop(fn.unpack(v, seed), fn.n, system.group) if seed.is_uniform else None
            if lp is not None:
                w = fn.pack(lp)
                if fn.value(w) <= fn.value(v):
                    v = w
    verdict = palais_smale_monitor(trace, settings, contractible=seed.contractible, k=k)
    cp = _finish(fn, v, k, trace, "minimizer", verdict.label == "converged", verdict.label, seed)
    if with_index and cp.converged:
        md = morse_index(cp, system, convention=convention, eps=settings.eps_idx)
        cp.index, cp.nullity = md.index, md.nullity
        if md.index > 0:
            cp.kind = "other"
    return cp


def refine_critical(
    loop: LoopPath,
    system: MagneticSystem,
    k: float,
    settings: SearchSettings = SearchSettings(),
    convention: ActionConvention | None = None,
    kind: str = "mountain-pass",
    max_iter: int = 100,
) -> CriticalPoint:
    """Find a nearby critical point of any index (Levenberg-Marquardt on ``|grad S|^2``)."""
    fn = _functional_for(loop, system, k, convention)
    v = fn.pack(loop)
    lm = 1e-3
    trace: List[TraceRecord] = []
    for _ in range(max_iter):
        val, g = fn.value_and_grad(v)
        res = fn.residual(v, g)
        gn = fn.grad_norm(v, g)
        trace.append(TraceRecord(val, float(v[-1]), gn, res, lm))
        if res < settings.tol_r and gn < settings.tol_g:
            break
        lam, V = np.linalg.eigh(fn.hessian(v))
        gg = V.T @ g
        gnorm = np.linalg.norm(g)
        moved = False
        while lm < 1e8:
            cand = v - V @ (lam * gg / (lam**2 + lm))
            try:
                _, g2 = fn.value_and_grad(cand)
                ok = np.linalg.norm(g2) < gnorm and cand[-1] >= settings.T_min
            except ValueError:
                ok = False
            if ok:
                v = cand
                lm = max(lm / 3.0, 1e-14)
                moved = True
                break
            lm *= 4.0
        if not moved or v[-1] > settings.T_max:
            break
    verdict = palais_smale_monitor(trace, settings, contractible=loop.contractible, k=k)
    cp = _finish(fn, v, k, trace, kind, verdict.label == "converged", verdict.label, loop)
    if cp.converged:
        md = morse_index(cp, system, convention=convention, eps=settings.eps_idx)
        cp.index, cp.nullity = md.index, md.nullity
    return cp


def _rotation_direction(loop: LoopPath, group) -> np.ndarray:
    z = loop.points
    closed_next = np.append(z[1:], loop.closing_point(group))
    prev = np.concatenate([[loop.deck(group).inverse()(z[-1])], z[:-1]])
    t = 0.5 * (closed_next - prev)
    d = np.concatenate([t.real, t.imag, [0.0]])
    nrm = np.linalg.norm(d)
    return d / nrm if nrm > 0 else d


def morse_index(
    cp: CriticalPoint,
    system: MagneticSystem,
    k: float | None = None,
    convention: ActionConvention | None = None,
    eps: float = 1e-6,
    deflate_rotation: bool = False,
    require_converged: bool = True,
) -> MorseData:
    """Index and nullity of the discrete second variation in ``(points, T)``.

    Eigenvalues below ``-eps * max|eig|`` count toward the index and those in
    ``[-eps, eps] * max|eig|`` toward the nullity.  The time-shift direction is
    reported separately and can be projected out before counting.
    """
    if require_converged and not cp.converged:
        raise ValueError("Morse data needs a converged critical point")
    k = cp.k if k is None else k
    loop = cp.loop
    fn = _functional_for(loop, system, k, convention)
    H = fn.hessian(fn.pack(loop))
    H = 0.5 * (H + H.T)
    rot = _rotation_direction(loop, system.group)
    lam_full = np.linalg.eigvalsh(H)
    thresh = eps * np.abs(lam_full).max()
    rq = float(rot @ H @ rot)
    rotation_in_kernel = abs(rq) <= thresh * 10.0
    if deflate_rotation:
        Q, _ = np.linalg.qr(np.column_stack([rot, np.eye(H.shape[0])]))
        B = Q[:, 1 : H.shape[0]]
        lam = np.linalg.eigvalsh(B.T @ H @ B)
    else:
        lam = lam_full
    index = int(np.sum(lam < -thresh))
    nullity = int(np.sum(np.abs(lam) <= thresh))
    return MorseData(index, nullity, rotation_in_kernel, lam)


def palais_smale_monitor(trace, settings: SearchSettings = SearchSettings(), contractible: bool = True, k: float | None = None) -> PSVerdict:
    """Classify an optimizer trace.

    ``converged`` (bounded period, vanishing gradient), ``shrinking`` (period
    at the floor with action tending to zero, contractible class), ``escaping``
    (period at the cap), ``inconsistent`` (non-contractible loop at the floor
    without a growing action), ``unconverged`` otherwise.
    """
    if not trace:
        return PSVerdict("unconverged", "empty trace")
    last = trace[-1]
    T_floor = settings.T_min * (1.0 + 1e-9)
    if last.grad_norm < settings.tol_g and last.residual < settings.tol_r and settings.T_min < last.period < settings.T_max:
        return PSVerdict("converged", f"gradient {last.grad_norm:.3e} at T={last.period:.6g}")
    if last.period >= settings.T_max:
        return PSVerdict("escaping", f"period reached the cap {settings.T_max:g}")
    if last.period <= T_floor:
        if contractible:
            bound = 10.0 * (k if k is not None else 1.0) * settings.T_min
            if abs(last.value) <= max(bound, 1e-12):
                return PSVerdict("shrinking", f"shrank to a point: S={last.value:.3e}, T at floor")
            return PSVerdict("unconverged", f"period at floor with S={last.value:.3e} away from 0")
        values = [r.value for r in trace]
        growing = len(values) > 1 and values[-1] > values[0] and values[-1] > 1.0 / settings.T_min * 1e-3
        if growing:
            return PSVerdict("shrinking", "non-contractible loop at the floor with growing action")
        return PSVerdict("inconsistent", "non-contractible loop reached the period floor with bounded action")
    return PSVerdict("unconverged", f"stopped with gradient {last.grad_norm:.3e}")


def shooting_defect(loop: LoopPath, system: MagneticSystem, k: float, substeps: int = 8) -> float:
    """Largest per-edge gap between the flow and the loop.

    From every point the flow is integrated for the edge time ``tau_e T``,
    starting with the central-difference direction at speed ``sqrt(2k)``; the
    result is compared with the next point.  Critical loops of the discrete
    action give a gap that shrinks like ``N^-3``.  Integrating the whole period
    from one point instead would amplify the launch error by the orbit's
    instability, which is large for the minimizers of oscillating fields.
    """
    group = system.group
    closed = loop.closed_points(group)
    prev = loop.deck(group).inverse()(loop.points[-1])
    z_prev = np.concatenate([[prev], loop.points[:-1]])
    z_next = closed[1:]
    h = loop.weights * loop.period
    speed = math.sqrt(2.0 * k)
    worst = 0.0
    for z, a, b, dt in zip(loop.points, z_prev, z_next, h):
        d = b - a
        v = d / abs(d) * speed * z.imag
        tr = integrate(FlowState(z.real, z.imag, v.real, v.imag), system, dt, dt / substeps, k=k)
        e = tr.states[-1]
        worst = max(worst, float(dist(complex(e[0], e[1]), b)))
    return worst
