import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from magflow.field import SURFACE_AREA, ConstantField, OscillatingField, sigma_density
from magflow.geometry import CENTER, HPoint, octagon_group

G = octagon_group()


def test_surface_area():
    assert SURFACE_AREA == pytest.approx(4 * math.pi, rel=1e-15)


def test_constant_field():
    f = ConstantField(1.5)
    assert f.total_flux == pytest.approx(6 * math.pi)
    assert np.all(f.density(np.array([1j, 2 + 3j])) == 1.5)
    assert f.scalar_density()(0.3, 2.0) == 1.5


class TestOscillating:
    def test_oscillating_defaults(self):
        f = OscillatingField()
        assert f.min_value < 0 < f.max_value
        assert f.total_flux > 0
        assert sigma_density(f.min_point, f) == pytest.approx(f.min_value)

    def test_bump_flux_matches_radial_integral(self):
        f = OscillatingField()
        oracle, _ = quad(lambda r: -f.s * f.amplitude * f.profile(math.cosh(r) - 1) * math.sinh(r), 0, f.radius,
                         epsabs=1e-14, epsrel=1e-14)
        assert f.bump_flux == pytest.approx(2 * math.pi * oracle, rel=1e-12)
        assert f.total_flux == pytest.approx(4 * math.pi + 2 * math.pi * oracle, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            OscillatingField(radius=-1.0)
        with pytest.raises(ValueError):
            OscillatingField(order=1)
        with pytest.raises(ValueError):
            OscillatingField(radius=3.0)
        with pytest.raises(ValueError):
            OscillatingField(amplitude=60.0)

    def test_radial_density(self):
        f = OscillatingField()
        assert f.radial_density(0.0) == pytest.approx(f.s * (1 - f.amplitude))
        assert f.radial_density(f.radius + 0.1) == f.s

    @given(st.integers(0, 2**32 - 1), st.integers(0, 7))
    def test_periodic(self, seed, j):
        f = OscillatingField()
        rng = np.random.default_rng(seed)
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.6, 1.6))
        gz = G.generators[j](z)
        assert f.density(np.array([gz]))[0] == pytest.approx(f.density(np.array([z]))[0], abs=1e-10)

    def test_scalar_matches_vector(self):
        f = OscillatingField()
        fs = f.scalar_density(G)
        rng = np.random.default_rng(5)
        for _ in range(200):
            z = complex(rng.uniform(-3, 3), rng.uniform(0.05, 3))
            assert fs(z.real, z.imag) == pytest.approx(f.density(np.array([z]))[0], abs=1e-9)

    def test_center_default(self):
        assert OscillatingField().center == CENTER
        assert OscillatingField().min_point == HPoint(0.0, 1.0)
