"""Mountain-pass search between a local minimizer and a lower valley loop, and energy scans."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..action.functional import LoopFunctional, _functional_for
from ..action.loops import ActionConvention, LoopPath, iterate_loop, resample_loop
from ..dynamics import MagneticSystem
from .descent import CriticalPoint, SearchSettings, find_local_min, refine_critical
from .distinct import distinct

__all__ = [
    "PathSettings",
    "MinimaxPath",
    "MountainPassResult",
    "ScanRow",
    "ScanTable",
    "mountain_pass",
    "scan_minimax",
    "format_float",
    "negative_disc_seed",
]


def format_float(x: float) -> str:
    """17 significant digits, the serialization used for every numeric column."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class PathSettings:
    images: int = 16
    points_per_turn: int = 64
    max_iter: int = 400
    min_iter: int = 60
    plateau_tol: float = 1e-6
    plateau_window: int = 40
    refine_iter: int = 100


@dataclass
class MinimaxPath:
    """A discrete path of loops with its action profile."""

    images: List[LoopPath]
    values: np.ndarray
    history: List[float] = field(default_factory=list)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))

    @property
    def maximum(self) -> float:
        return float(np.max(self.values))


@dataclass
class MountainPassResult:
    critical: CriticalPoint
    c_n: float
    path_max: float
    path: Optional[MinimaxPath]
    degenerate: bool = False


# -- string relaxation --------------------------------------------------------


def _preconditioned_descent(V, G, n, k):
    """Descent directions in an ``H^1`` metric along each loop (circulant, via FFT)."""
    x_sl, y_sl = slice(0, n), slice(n, 2 * n)
    y = V[:, y_sl]
    T = V[:, 2 * n]
    lam = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n) + 1.0 / n**2
    out = np.empty_like(G)
    for sl in (x_sl, y_sl):
        u = np.fft.ifft(np.fft.fft(y * G[:, sl], axis=1) / lam, axis=1).real
        out[:, sl] = -(T / n)[:, None] * y * u
    gT = G[:, 2 * n]
    curv = np.maximum(2.0 * (k - gT) / T**2, 1e-6)
    out[:, 2 * n] = -gT / curv
    return out


def _respace(P, n, count: int | None = None):
    """Redistribute path images uniformly in a scaled arclength (optionally changing their number)."""
    y = 0.5 * (P[1:, n : 2 * n] + P[:-1, n : 2 * n])
    dz = np.hypot(np.diff(P[:, :n], axis=0), np.diff(P[:, n : 2 * n], axis=0)) / y
    dT = np.diff(P[:, 2 * n]) / (0.5 * (P[1:, 2 * n] + P[:-1, 2 * n]))
    d = np.sqrt(np.mean(dz**2, axis=1) + dT**2)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    count = len(P) if count is None else count
    if cum[-1] == 0.0:
        return P[np.linspace(0, len(P) - 1, count).round().astype(int)]
    cum /= cum[-1]
    Q = np.empty((count, P.shape[1]))
    for j, t in enumerate(np.linspace(0.0, 1.0, count)):
        i = min(int(np.searchsorted(cum, t, side="right")) - 1, len(P) - 2)
        span = cum[i + 1] - cum[i]
        f = 0.0 if span == 0 else (t - cum[i]) / span
        Q[j] = (1.0 - f) * P[i] + f * P[i + 1]
    return Q


def _relax_string(fn: LoopFunctional, P, k, ps: PathSettings, log: Callable[[str], None] | None = None):
    M = len(P)
    n = fn.n
    P = np.array(P, dtype=float)
    eta = np.full(M, 0.2)
    history: List[float] = []
    for it in range(ps.max_iter):
        vals, G = fn.batch_value_and_grad(P)
        history.append(float(vals.max()))
        if it >= ps.min_iter and len(history) > ps.plateau_window:
            window = history[-ps.plateau_window :]
            if max(window) - min(window) < ps.plateau_tol * max(1.0, abs(window[-1])):
                break
        D = _preconditioned_descent(P, G, n, k)
        newP = P.copy()
        pending = np.arange(1, M - 1)
        # each interior image backtracks until its action does not increase
        while pending.size:
            cand = P[pending] + eta[pending, None] * D[pending]
            ok = np.all(cand[:, n : 2 * n] > 0, axis=1) & (cand[:, 2 * n] > 0)
            cv = np.full(pending.size, np.inf)
            if np.any(ok):
                cv[ok] = fn.batch_value(cand[ok])
            good = cv <= vals[pending]
            newP[pending[good]] = cand[good]
            eta[pending[good]] = np.minimum(eta[pending[good]] * 1.2, 1.0)
            eta[pending[~good]] *= 0.5
            pending = pending[~good & (eta[pending] >= 1e-8)]
        P = _respace(newP, n)
        if log is not None and it % 50 == 0:
            log(f"string iteration {it}: max S = {history[-1]:.10g} at image {int(np.argmax(vals))}")
    vals = fn.batch_value(P)
    return P, vals, history


def _chain_path(base_rows: np.ndarray, n: int, count: int) -> np.ndarray:
    """Path from the ``n``-th iterate of a loop to that of the valley, one copy at a time.

    ``base_rows`` is a relaxed single-copy path (packed loops).  Step ``j``
    runs it in slot ``j`` with ``j`` finished copies before and ``n - 1 - j``
    untouched copies after.
    """
    m = (base_rows.shape[1] - 1) // 2
    first, last = base_rows[0], base_rows[-1]

    def chain(slots):
        x = np.concatenate([s[:m] for s in slots])
        y = np.concatenate([s[m : 2 * m] for s in slots])
        return np.concatenate([x, y, [sum(s[2 * m] for s in slots)]])

    rows = []
    for j in range(n):
        for i in range(0 if j == 0 else 1, len(base_rows)):
            rows.append(chain([last] * j + [base_rows[i]] + [first] * (n - 1 - j)))
    return _respace(np.array(rows), n * m, count)


def _argmax_image(vals, G_norm, tol):
    top = vals.max()
    near = np.flatnonzero(vals >= top - tol * max(1.0, abs(top)))
    # ties: prefer the image with the larger gradient
    return int(near[np.argmax(G_norm[near])])


def mountain_pass(
    minimizer: CriticalPoint,
    valley: LoopPath,
    n: int,
    system: MagneticSystem,
    k: float,
    path: PathSettings = PathSettings(),
    settings: SearchSettings = SearchSettings(),
    convention: ActionConvention | None = None,
    log: Callable[[str], None] | None = None,
    base: "MountainPassResult | None" = None,
) -> MountainPassResult:
    """Minimax over paths from the ``n``-th iterate of ``minimizer`` to that of ``valley``.

    Loops on the path carry ``2 n N`` points (``N = path.points_per_turn``).
    For ``n = 1`` (and non-contractible classes) the initial path interpolates
    linearly between the re-minimized resampled minimizer and the valley.  For
    contractible ``n > 1`` it turns one copy at a time into the valley along
    the relaxed ``n = 1`` path ``base`` (computed when not given), which keeps
    the maximum near ``(n - 1) S(minimizer) + c_1``.

    The path is relaxed as a string (images flow down the action and are
    kept equidistant); the highest image is then refined by a
    Levenberg-Marquardt search for a nearby critical point of any index.
    ``c_n`` is the refined critical value when the refinement converges,
    otherwise the path maximum.
    """
    if n < 1:
        raise ValueError("iteration order must be >= 1")
    group = system.group
    mval = minimizer.value
    from ..action.functional import action_Sk

    vval = action_Sk(valley, system, k, convention).total
    if abs(vval - mval) <= 1e-9 * max(1.0, abs(mval)) and not distinct(minimizer.loop, valley, group):
        cp = find_local_min(iterate_loop(minimizer.loop, n, group), system, k, settings, convention)
        return MountainPassResult(cp, cp.value, cp.value, None, degenerate=True)
    if not vval < mval:
        raise ValueError("the valley loop must have lower action than the minimizer")
    npts = 2 * n * path.points_per_turn
    if n > 1 and valley.contractible and base is None:
        base = mountain_pass(minimizer, valley, 1, system, k, path, settings, convention, log)
    if n > 1 and valley.contractible and base is not None and base.path is not None:
        rows = np.array([LoopFunctional.pack(img) for img in base.path.images])
        P0 = _chain_path(rows, n, path.images)
        m = (P0.shape[1] - 1) // 2
        template = LoopPath(P0[0, :m] + 1j * P0[0, m : 2 * m], float(P0[0, -1]))
        fn = _functional_for(template, system, k, convention)
    else:
        a_seed = resample_loop(iterate_loop(minimizer.loop, n, group), npts, group)
        a_cp = find_local_min(a_seed, system, k, settings, convention, with_index=False)
        b_loop = iterate_loop(valley, n, group)
        if b_loop.n != npts:
            b_loop = resample_loop(b_loop, npts, group)
        # align the valley start with the minimizer start to keep the initial path short
        b_pts = b_loop.points
        if b_loop.contractible:
            shift = int(np.argmin(np.abs(b_pts - a_cp.loop.points[0])))
            b_loop = b_loop.with_points(np.roll(b_pts, -shift))
        template = a_cp.loop
        fn = _functional_for(template, system, k, convention)
        A, B = fn.pack(template), fn.pack(b_loop)
        P0 = np.array([(1.0 - t) * A + t * B for t in np.linspace(0.0, 1.0, path.images)])
    P, vals, history = _relax_string(fn, P0, k, path, log)
    _, G = fn.batch_value_and_grad(P)
    gnorm = np.array([fn.grad_norm(P[j], G[j]) for j in range(len(P))])
    j = _argmax_image(vals, gnorm, 1e-9)
    images = [fn.unpack(row, template) for row in P]
    mp = MinimaxPath(images, vals, history)
    cp = refine_critical(images[j], system, k, settings, convention, kind="mountain-pass", max_iter=path.refine_iter)
    if cp.converged and cp.index == 0:
        cp.kind = "minimizer"
    c_n = cp.value if cp.converged else mp.maximum
    if log is not None:
        log(f"mountain pass n={n}: path max {mp.maximum:.10g}, refined {cp.value:.10g}, index {cp.index}")
    return MountainPassResult(cp, c_n, mp.maximum, mp)


# -- scans ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    k: float
    n: int
    c_n: float
    converged: bool
    minimizer_value: float
    argmax_residual: float
    index: int = -1


COLUMNS = ("k", "n", "c_n", "converged", "minimizer_value", "argmax_residual")


@dataclass
class ScanTable:
    rows: List[ScanRow] = field(default_factory=list)
    minimizers: Dict[float, CriticalPoint] = field(default_factory=dict, repr=False)
    results: Dict[tuple, MountainPassResult] = field(default_factory=dict, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in sorted(self.rows, key=lambda r: (r.k, r.n)):
            w.writerow([format_float(r.k), str(r.n), format_float(r.c_n), "1" if r.converged else "0",
                        format_float(r.minimizer_value), format_float(r.argmax_residual)])
        return buf.getvalue()

    def series(self, n: int):
        rows = sorted((r for r in self.rows if r.n == n), key=lambda r: r.k)
        return np.array([r.k for r in rows]), np.array([r.c_n for r in rows])

    def monotonicity_violations(self, noise: float = 1e-8) -> List[tuple]:
        """``(n, k_left, k_right)`` where ``c_n`` decreases by more than ``noise``."""
        out = []
        for n in sorted({r.n for r in self.rows}):
            ks, cs = self.series(n)
            for i in range(len(ks) - 1):
                if cs[i + 1] < cs[i] - noise:
                    out.append((n, float(ks[i]), float(ks[i + 1])))
        return out

    def per_iterate_trend(self, k: float) -> dict:
        """Ratios ``c_n / n`` and differences ``c_{n+1} - c_n`` at one energy."""
        rows = sorted((r for r in self.rows if r.k == k), key=lambda r: r.n)
        ns = np.array([r.n for r in rows])
        cs = np.array([r.c_n for r in rows])
        return {"n": ns, "ratio": cs / ns, "increments": np.diff(cs)}


def negative_disc_seed(system: MagneticSystem, k: float, n: int, phase: float = 0.0) -> LoopPath:
    """Counterclockwise circle at the field minimum with the most negative ``T_k``, run at speed ``sqrt(2k)``."""
    from ..action import circle_loop, disc_taimanov
    from ..geometry import INRADIUS

    radii = np.linspace(0.05, INRADIUS - 0.05, 30)
    vals = [disc_taimanov(system, k, float(r), n=128) for r in radii]
    r = float(radii[int(np.argmin(vals))])
    period = 2.0 * math.pi * math.sinh(r) / math.sqrt(2.0 * k)
    return circle_loop(system.field.min_point.z, r, n, period, phase=phase)


def scan_minimax(
    grid: Sequence[float],
    ns: Sequence[int],
    system: MagneticSystem,
    seed_for: Callable[[float], LoopPath] | None = None,
    upper: float | None = None,
    path: PathSettings = PathSettings(),
    settings: SearchSettings = SearchSettings(),
    valley_power: int = 2,
    log: Callable[[str], None] | None = None,
) -> ScanTable:
    """``c_n(k)`` over an energy grid, one local minimizer per energy.

    ``seed_for(k)`` gives the seed of the local minimizer (by default the most
    negative disc at the field minimum); the valley is its
    ``valley_power``-fold iterate.  Energies outside ``(0, upper)`` are
    rejected.  Non-converged cells are kept with ``converged = False``.
    """
    table = ScanTable()
    for k in grid:
        if not k > 0 or (upper is not None and not k < upper):
            raise ValueError(f"energy {k} outside the admissible interval (0, {upper})")
    if seed_for is None:
        seed_for = lambda k: negative_disc_seed(system, k, path.points_per_turn)  # noqa: E731
    for k in sorted(grid):
        k = float(k)
        cp = find_local_min(seed_for(k), system, k, settings)
        table.minimizers[k] = cp
        if not cp.converged:
            for n in sorted(ns):
                table.rows.append(ScanRow(k, int(n), math.nan, False, cp.value, math.nan))
            continue
        valley = iterate_loop(cp.loop, valley_power, system.group)
        first = None
        for n in sorted(ns):
            if n > 1 and first is None and valley.contractible:
                first = mountain_pass(cp, valley, 1, system, k, path, settings, log=log)
            try:
                res = first if n == 1 and first is not None else mountain_pass(
                    cp, valley, n, system, k, path, settings, log=log, base=first)
            except (ValueError, ArithmeticError) as exc:
                if log is not None:
                    log(f"k={k:.6g} n={n}: failed ({exc})")
                table.rows.append(ScanRow(k, int(n), math.nan, False, cp.value, math.nan))
                continue
            if n == 1:
                first = res
            table.results[(k, int(n))] = res
            table.rows.append(
                ScanRow(k, int(n), float(res.c_n), bool(res.critical.converged), float(cp.value),
                        float(res.critical.ode_residual), res.critical.index)
            )
            if log is not None:
                log(f"k={k:.6g} n={n}: c_n={res.c_n:.10g}")
    return table
