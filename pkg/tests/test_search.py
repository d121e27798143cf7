import json
import math

import numpy as np
import pytest

from magflow.action import circle_loop, iterate_loop, resample_loop
from magflow.dynamics import MagneticSystem
from magflow.search import (
    CriticalPoint,
    ScanRow,
    ScanTable,
    SearchSettings,
    TraceRecord,
    distinct,
    find_local_min,
    format_float,
    morse_index,
    mountain_pass,
    neighbour_tiles,
    palais_smale_monitor,
    scan_minimax,
    shooting_defect,
    surface_hausdorff,
)

from conftest import K_ORBIT

SETTINGS = SearchSettings()


def trace(values, periods, grads=None, residuals=None):
    grads = grads or [1.0] * len(values)
    residuals = residuals or [1.0] * len(values)
    return [TraceRecord(v, T, g, r, 1.0) for v, T, g, r in zip(values, periods, grads, residuals)]


class TestPalaisSmale:
    def test_converged(self):
        v = palais_smale_monitor(trace([-1.0, -1.1], [5.0, 5.0], [1e-3, 1e-9], [1e-3, 1e-9]))
        assert v.label == "converged"

    def test_empty(self):
        assert palais_smale_monitor([]).label == "unconverged"

    def test_escaping(self):
        assert palais_smale_monitor(trace([-1.0, -2.0], [10.0, SETTINGS.T_max])).label == "escaping"

    def test_shrinking_synthetic(self):
        v = palais_smale_monitor(trace([0.5, 1e-6], [1.0, SETTINGS.T_min]), k=0.7)
        assert v.label == "shrinking"
        v = palais_smale_monitor(trace([0.5, 0.2], [1.0, SETTINGS.T_min]), k=0.7)
        assert v.label == "unconverged"

    def test_noncontractible_inconsistent(self):
        v = palais_smale_monitor(trace([1.0, 0.9, 0.8], [1.0, 0.1, SETTINGS.T_min]), contractible=False)
        assert v.label == "inconsistent"
        v = palais_smale_monitor(trace([1.0, 50.0, 5e3], [1.0, 0.1, SETTINGS.T_min]), contractible=False)
        assert v.label == "shrinking"

    def test_constant_field_shrinks(self, const):
        k = 0.7
        cp = find_local_min(circle_loop(1j, 0.5, 32, 3.0), const, k)
        assert cp.classification == "shrinking"
        assert not cp.converged
        assert abs(cp.value) <= 10 * k * SETTINGS.T_min
        assert cp.loop.period == pytest.approx(SETTINGS.T_min)


class TestMinimizer:
    def test_minimizer(self, orbit_run):
        cp = orbit_run["minimizer"]
        assert cp.converged and cp.classification == "converged"
        assert cp.value < 0
        assert cp.index == 0
        assert cp.ode_residual < SETTINGS.tol_r
        assert abs(cp.dSdT) < 1e-8
        assert [r.value for r in cp.trace] == sorted((r.value for r in cp.trace), reverse=True)

    def test_dossier(self, orbit_run):
        cp = orbit_run["minimizer"]
        d = json.loads(cp.to_json())
        assert d["kind"] == "minimizer" and d["index"] == 0
        assert len(d["points"]) == cp.loop.n
        assert d["value"] == cp.value

    def test_shooting_defect(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        assert shooting_defect(cp.loop, osc, K_ORBIT) < 1e-3
        coarse = resample_loop(cp.loop, 32, osc.group)
        fine_cp = find_local_min(coarse, osc, K_ORBIT, with_index=False)
        assert shooting_defect(fine_cp.loop, osc, K_ORBIT) > shooting_defect(cp.loop, osc, K_ORBIT)

    def test_iterate_stays_critical(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        two = find_local_min(iterate_loop(cp.loop, 2), osc, K_ORBIT, with_index=False)
        assert two.converged
        assert two.value == pytest.approx(2 * cp.value, abs=1e-9)

    def test_morse_refuses_unconverged(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        raw = CriticalPoint(orbit_run["seed"], K_ORBIT, 0.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            morse_index(raw, osc, K_ORBIT)
        data = morse_index(cp, osc, K_ORBIT)
        index, nullity = data
        assert index == 0 and nullity >= 1 and data.rotation_in_kernel


class TestMountainPass:
    def test_mountain_pass(self, orbit_run, osc):
        cp, mp = orbit_run["minimizer"], orbit_run["mp"]
        crit = mp.critical
        assert crit.converged
        assert crit.ode_residual < 1e-4
        assert crit.index >= 1
        assert mp.c_n >= cp.value > action_of(orbit_run["valley"], osc)
        # the string samples the path at finitely many images, so its maximum only brackets the saddle value
        assert abs(mp.path.maximum - mp.c_n) < 1e-3
        assert distinct(cp, crit, osc.group)

    def test_degenerate(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        res = mountain_pass(cp, cp.loop, 1, osc, K_ORBIT)
        assert res.degenerate
        assert res.c_n == pytest.approx(cp.value, abs=1e-10)
        assert not distinct(res.critical, cp, osc.group)

    def test_valley_must_be_lower(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        higher = circle_loop(0.3 + 1.2j, 0.2, cp.loop.n, 5.0)
        with pytest.raises(ValueError):
            mountain_pass(cp, higher, 1, osc, K_ORBIT)


def action_of(loop, system):
    from magflow.action import action_Sk

    return action_Sk(loop, system, K_ORBIT).total


class TestDistinct:
    def test_self_and_iterate(self, orbit_run, osc):
        cp = orbit_run["minimizer"]
        assert not distinct(cp, cp, osc.group)
        assert not distinct(cp.loop, iterate_loop(cp.loop, 2), osc.group)

    def test_rotation_and_reversal(self, orbit_run, osc):
        from magflow.action import reverse_loop

        lp = orbit_run["minimizer"].loop
        shifted = lp.with_points(np.roll(lp.points, 17))
        assert not distinct(lp, shifted, osc.group)
        assert not distinct(lp, reverse_loop(lp), osc.group)

    def test_deck_translate(self, orbit_run, osc):
        lp = orbit_run["minimizer"].loop
        g = osc.group.generators[2]
        assert surface_hausdorff(lp, lp.with_points(g(lp.points)), osc.group) < 1e-10

    def test_separated_circles(self, osc):
        a = circle_loop(1j, 0.5, 64, 1.0)
        b = circle_loop(1j, 0.8, 64, 1.0)
        assert distinct(a, b, osc.group)
        assert surface_hausdorff(a, b, osc.group) == pytest.approx(0.3, abs=5e-3)

    def test_neighbour_tiles(self):
        assert neighbour_tiles() == 49


class TestScan:
    def test_empty_grid(self, osc):
        table = scan_minimax([], [1, 2], osc)
        assert table.rows == []
        assert table.to_csv() == "k,n,c_n,converged,minimizer_value,argmax_residual\n"

    def test_grid_outside_interval(self, osc):
        with pytest.raises(ValueError):
            scan_minimax([0.5], [1], osc, upper=0.01)
        with pytest.raises(ValueError):
            scan_minimax([-1e-3], [1], osc)

    def test_csv_and_monotonicity(self):
        rows = [ScanRow(0.2, 1, -0.1, True, -0.2, 1e-9), ScanRow(0.1, 1, -0.3, True, -0.4, 1e-9),
                ScanRow(0.3, 1, -0.15, False, -0.1, math.nan), ScanRow(0.1, 2, -0.5, True, -0.4, 1e-9)]
        table = ScanTable(rows)
        lines = table.to_csv().splitlines()
        assert lines[0] == "k,n,c_n,converged,minimizer_value,argmax_residual"
        assert [ln.split(",")[:2] for ln in lines[1:]] == [["0.10000000000000001", "1"], ["0.10000000000000001", "2"],
                                                             ["0.20000000000000001", "1"], ["0.29999999999999999", "1"]]
        assert lines[4].split(",")[3] == "0" and lines[4].split(",")[5] == "nan"
        assert table.monotonicity_violations(1e-6) == [(1, 0.2, 0.3)]
        assert table.monotonicity_violations(0.1) == []
        trend = table.per_iterate_trend(0.1)
        assert list(trend["ratio"]) == [-0.3, -0.25]

    def test_format_float(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert float(format_float(math.pi)) == math.pi
