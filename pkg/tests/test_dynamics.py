import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magflow.dynamics import (
    FlowState,
    MagneticSystem,
    PreconditionError,
    circle_orbit_period,
    closure_check,
    integrate,
    liouville_action,
    ode_rhs,
    small_orbit_period,
    small_orbit_state,
)
from magflow.geometry import HPoint, TangentVec, octagon_group

from conftest import circle_period

G = octagon_group()
ZERO = MagneticSystem.constant(0.0)


def covariant_acceleration(state, system):
    """Covariant acceleration from the coordinate one via the half-plane Christoffel symbols."""
    _, _, ax, ay = ode_rhs(state, system)
    x, y, vx, vy = state.x, state.y, state.vx, state.vy
    return ax - 2 * vx * vy / y, ay + (vx * vx - vy * vy) / y


class TestRhs:
    def test_zero_field_vertical(self):
        st0 = FlowState(0.0, 1.0, 0.0, 1.0)
        d = ode_rhs(st0, ZERO)
        assert d[0] == 0.0 and d[2] == 0.0

    @given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(0, 2 * math.pi), st.floats(0.01, 2), st.floats(-3, 3))
    def test_lorentz_norm(self, x, y, angle, k, s):
        state = FlowState.from_direction(HPoint(x, y), angle, k)
        cx, cy = covariant_acceleration(state, MagneticSystem.constant(s))
        assert math.hypot(cx, cy) / y == pytest.approx(abs(s) * math.sqrt(2 * k), rel=1e-10, abs=1e-12)

    def test_positive_field_turns_clockwise(self):
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.0, 0.3)
        cx, cy = covariant_acceleration(state, MagneticSystem.constant(1.0))
        assert state.vx * cy - state.vy * cx < 0
        traj = integrate(state, MagneticSystem.constant(1.0), 0.05, 1e-3)
        assert traj.points[-1].imag < 1.0


class TestIntegrate:
    def test_bad_arguments(self):
        st0 = FlowState(0.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            integrate(st0, ZERO, 1.0, 0.0)
        with pytest.raises(ValueError):
            integrate(st0, ZERO, -1.0, 1e-3)

    def test_vertical_geodesic(self):
        st0 = FlowState(0.0, 1.0, 0.0, 1.0)
        traj = integrate(st0, ZERO, 1.0, 1e-3, k=0.5)
        end = traj.points[-1]
        assert abs(end - 1j * math.e) < 1e-10

    @given(st.floats(-2, 2), st.floats(0.3, 3), st.floats(0, 2 * math.pi), st.floats(0.5, 5))
    @settings(max_examples=20)
    def test_zero_field_matches_geodesic(self, x, y, angle, t):
        # unit-speed geodesic: the image of i e^t under the isometry taking (i, up) to (p, v)
        state = FlowState.from_direction(HPoint(x, y), angle, 0.5)
        traj = integrate(state, ZERO, t, 1e-3)
        c, s_ = math.cos((angle - math.pi / 2) / 2), math.sin((angle - math.pi / 2) / 2)
        w = 1j * math.exp(traj.t[-1])
        rot = (c * w + s_) / (-s_ * w + c)
        exact = y * rot + x
        assert abs(traj.points[-1] - exact) < 1e-8

    def test_closed_orbit_returns(self):
        k = 0.3
        sys1 = MagneticSystem.constant(1.0)
        T = circle_orbit_period(1.0, k)
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.3, k)
        traj = integrate(state, sys1, 3 * T, T / 20000)
        assert abs(traj.points[-1] - traj.points[0]) < 1e-6
        assert np.max(np.abs(traj.states[-1] - traj.states[0])) < 1e-6

    def test_fourth_order_drift(self):
        sys1 = MagneticSystem.constant(1.0)
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.0, 0.3)
        d1 = integrate(state, sys1, 10.0, 4e-2, sample_every=25).max_drift
        d2 = integrate(state, sys1, 10.0, 2e-2, sample_every=50).max_drift
        assert d1 / d2 > 12

    def test_csv(self, tmp_path):
        traj = integrate(FlowState(0.0, 1.0, 0.0, 1.0), ZERO, 0.01, 1e-3)
        traj.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert len(lines) == 12

    @given(st.integers(0, 7), st.floats(0, 2 * math.pi))
    @settings(max_examples=10)
    def test_equivariance(self, j, angle):
        sys = MagneticSystem.oscillating()
        g = G.generators[j]
        p = HPoint(0.2, 1.1)
        state = FlowState.from_direction(p, angle, 0.05)
        v = g.apply_vector(TangentVec(p, state.vx, state.vy))
        gstate = FlowState(v.base.x, v.base.y, v.vx, v.vy)
        a = integrate(state, sys, 3.0, 1e-3).points[-1]
        b = integrate(gstate, sys, 3.0, 1e-3).points[-1]
        assert abs(g(a) - b) / b.imag < 1e-8


class TestClosure:
    def test_closed_circle(self):
        k = 0.3
        state = FlowState.from_direction(HPoint(0.0, 1.0), 1.0, k)
        period = closure_check(state, MagneticSystem.constant(1.0), horizon=50.0)
        r = math.atanh(math.sqrt(2 * k))
        assert period == pytest.approx(circle_period(r, k), rel=1e-6)
        assert circle_orbit_period(1.0, k) == pytest.approx(circle_period(r, k), rel=1e-14)

    def test_open_regime(self):
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.0, 0.6)
        assert closure_check(state, MagneticSystem.constant(1.0), horizon=1e3, dt=1e-2) is None
        assert circle_orbit_period(1.0, 0.6) is None

    def test_zero_field_never_closes(self):
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.7, 0.5)
        assert closure_check(state, ZERO, horizon=20.0) is None


class TestSmallOrbit:
    def test_constant_fields(self):
        p, lead = small_orbit_period(HPoint(0, 1), MagneticSystem.constant(1.0), 1e-3)
        assert lead == pytest.approx(2 * math.pi)
        assert abs(p - 2 * math.pi) / (2 * math.pi) < 5e-3
        p, lead = small_orbit_period(HPoint(0, 1), MagneticSystem.constant(2.0), 1e-3)
        assert lead == pytest.approx(math.pi)
        assert abs(p - math.pi) / math.pi < 5e-3

    def test_state_on_circle(self):
        sys1 = MagneticSystem.constant(1.0)
        k = 1e-3
        state = small_orbit_state(HPoint(0, 1), sys1, k)
        assert state.energy == pytest.approx(k, rel=1e-12)
        r = math.atanh(math.sqrt(2 * k))
        d = math.acosh(1 + (state.x**2 + (state.y - 1) ** 2) / (2 * state.y))
        assert d == pytest.approx(r, rel=1e-10)

    def test_zero_field_precondition(self):
        with pytest.raises(PreconditionError):
            small_orbit_period(HPoint(0, 1), ZERO, 1e-3)

    def test_too_large_k(self):
        with pytest.raises(PreconditionError):
            small_orbit_period(HPoint(0, 1), MagneticSystem.constant(1.0), 0.6)


class TestLiouville:
    def test_constant_integrand(self):
        sys1 = MagneticSystem.constant(1.0)
        k = 0.3
        state = FlowState.from_direction(HPoint(0.0, 1.0), 0.0, k)
        T = closure_check(state, sys1, horizon=50.0)
        traj = integrate(state, sys1, T, T / 20000)
        val = liouville_action(traj, sys1, beta=lambda p: (0.0, 0.0), a_sigma=1.0, closure_tol=1e-4)
        assert val == pytest.approx((2 * k + 1.0) * T, rel=1e-10)
        avg = liouville_action(traj, sys1, beta=lambda p: (0.0, 0.0), a_sigma=1.0, normalized=True, closure_tol=1e-4)
        assert avg == pytest.approx(2 * k + 1.0, rel=1e-10)

    def test_open_orbit_refused(self):
        sys1 = MagneticSystem.constant(1.0)
        traj = integrate(FlowState.from_direction(HPoint(0, 1), 0.0, 0.3), sys1, 1.0, 1e-3)
        with pytest.raises(PreconditionError):
            liouville_action(traj, sys1)

    def test_a_sigma_gauss_bonnet(self):
        osc = MagneticSystem.oscillating()
        assert osc.a_sigma == pytest.approx(osc.field.total_flux / (-4 * math.pi), rel=1e-14)
