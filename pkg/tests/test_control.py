import math

import numpy as np
import pytest
from scipy import integrate

from vecgroth.model import NumericError
from vecgroth.parisi import control, functional
from vecgroth.parisi.terminal import terminal_inf_batch
from vecgroth.parisi.types import PROBABILITY, DiscreteMeasure, Path

UNIT = Path.simple([[1.0]], [1.0])


def quadratic(x, nu=0):
    return 0.5 * x ** 2 if nu == 0 else x


def constant(x, nu=0):
    return np.full_like(x, 2.0) if nu == 0 else np.zeros_like(x)


@pytest.fixture(scope="module")
def inf_spline():
    return control.terminal_spline([0.0], 3.0, 1.0, None, 25.0)


class TestSmoothing:
    def test_zero_spread_is_terminal(self):
        xs = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(control.smoothed(quadratic, 0.7, 0.0, xs), 0.5 * xs ** 2, atol=1e-14)

    def test_heat_kernel(self):
        xs = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(control.smoothed(quadratic, 0.0, 1.3, xs), 0.5 * xs ** 2 + 0.5 * 1.3 ** 2,
                                   rtol=1e-12)

    def test_tilted_quadratic_closed_form(self):
        m, sd, x = 0.2, 0.9, 0.7
        c = 1 - m * sd ** 2
        expect = 0.5 * x ** 2 / c - math.log(c) / (2 * m)
        assert float(control.smoothed(quadratic, m, sd, x)) == pytest.approx(expect, rel=1e-10)

    def test_origin_value_against_adaptive_quadrature(self, inf_spline):
        zeta = 0.5
        # closed form of the zero-temperature terminal for lam = 0, p = 3, t = 1
        f = lambda x: 2 * abs(x) ** 1.5 / (3 * math.sqrt(3))
        dens = lambda u: math.exp(-u * u / 2 + zeta * f(math.sqrt(2) * u)) / math.sqrt(2 * math.pi)
        oracle = math.log(2 * integrate.quad(dens, 0, 40, epsabs=0, epsrel=1e-13, limit=500)[0]) / zeta
        assert float(control.smoothed(inf_spline, zeta, math.sqrt(2.0), 0.0)) == pytest.approx(oracle, abs=5e-5)
        rec = functional.recursion(lambda x: terminal_inf_batch([0.0], 3, 1, x)[0], (zeta, zeta), UNIT)
        assert rec == pytest.approx(oracle, abs=1e-3)

    def test_window_error_for_large_tilt(self):
        with pytest.raises(NumericError):
            control.smoothed(lambda x, nu=0: x ** 2 if nu == 0 else 2 * x, 5.0, 2.0, 0.0)


class TestPdeResidual:
    def test_constant_terminal(self):
        rep = control.pde_residual(None, None, (0.5, 0.5), UNIT, terminal=constant)
        assert rep.max_residual <= 1e-9

    def test_heat_equation(self):
        rep = control.pde_residual(None, None, (0.0, 0.0), UNIT, terminal=quadratic)
        assert rep.max_residual <= 1e-6

    def test_positive_temperature_terminal_refines(self):
        alpha = DiscreteMeasure((0.1, 1.0), PROBABILITY)
        rep = control.pde_residual([0.0], 10.0, alpha, UNIT, refine=True)
        assert rep.max_residual <= 1e-3
        assert rep.refined_residual <= 0.5 * rep.max_residual
        assert not rep.coarse

    def test_zero_temperature_terminal(self):
        rep = control.pde_residual([0.0], None, (0.3, 0.3), UNIT)
        assert rep.max_residual <= 1e-3

    def test_needs_scalar_path(self):
        with pytest.raises(ValueError):
            control.pde_residual([0.0, 0.0, 0.0], None, (0.3, 0.3), Path.simple(np.eye(2), [1.0]))

    def test_probability_weights_need_beta(self):
        with pytest.raises(ValueError):
            control.pde_residual([0.0], None, DiscreteMeasure((0.1, 1.0), PROBABILITY), UNIT)


class TestSimulation:
    def test_drift_free_matches_gaussian_average(self, inf_spline):
        res = control.ac_simulate([0.0], (0.0, 0.0), UNIT, n_paths=20_000, terminal=inf_spline)
        exact = float(control.smoothed(inf_spline, 0.0, math.sqrt(2.0), 0.0))
        assert abs(res.estimate - exact) <= 4 * res.stderr
        assert abs(res.second_moment - 2.0) <= 4 * res.second_moment_stderr
        assert not res.exploded

    def test_zero_control_is_lower_bound(self, inf_spline):
        zeta = 0.5
        none = control.ac_simulate([0.0], (zeta, zeta), UNIT, control="none", n_paths=20_000,
                                   terminal=inf_spline)
        phi = float(control.smoothed(inf_spline, zeta, math.sqrt(2.0), 0.0))
        assert none.estimate <= phi + 4 * none.stderr

    def test_optimal_control_zero_temperature(self, inf_spline):
        zeta = 0.5
        res = control.ac_simulate([0.0], (zeta, zeta), UNIT, n_paths=20_000, terminal=inf_spline)
        phi = float(control.smoothed(inf_spline, zeta, math.sqrt(2.0), 0.0))
        assert abs(res.estimate - phi) <= 4 * res.stderr

    def test_deterministic(self, inf_spline):
        a = control.ac_simulate([0.0], (0.3, 0.3), UNIT, n_paths=2_000, terminal=inf_spline, seed=4)
        b = control.ac_simulate([0.0], (0.3, 0.3), UNIT, n_paths=2_000, terminal=inf_spline, seed=4)
        assert a == b

    def test_needs_single_level(self):
        with pytest.raises(ValueError):
            control.ac_simulate([0.0], (0.3, 0.3, 0.3), Path.simple([[1.0]], [0.5, 1.0]), n_paths=10)

    @pytest.mark.slow
    def test_second_moment_grows_with_multiplier(self):
        moments = []
        for lam in (0.0, 0.3, 0.6):
            spline = control.terminal_spline([lam], 3.0, 1.0, None, 25.0)
            res = control.ac_simulate([lam], (0.5, 0.5), UNIT, n_paths=20_000, terminal=spline)
            moments.append(res.second_moment)
        assert moments[0] < moments[1] < moments[2]


class TestMoments:
    def test_exponent_arithmetic(self):
        assert control.moment_exponent(3.0) == pytest.approx(4.0)
        assert control.moment_exponent(3.0) + 0.2 == pytest.approx(4.2)
        with pytest.raises(ValueError):
            control.moment_exponent(2.0)

    def test_diagnostic_slope(self):
        zetas = [0.25, 0.5, 1.0]
        rep = control.moment_diagnostic(zetas, [2 * z ** 1.5 + 0.0 for z in zetas], 3.0)
        assert rep.slope == pytest.approx(1.5)
        assert rep.within_cap
        steep = control.moment_diagnostic(zetas, [z ** 5 for z in zetas], 3.0)
        assert not steep.within_cap

    def test_diagnostic_rejects_short_sweep(self):
        with pytest.raises(ValueError):
            control.moment_diagnostic([1.0], [2.0], 3.0)
