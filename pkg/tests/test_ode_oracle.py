import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from stwave.ode_oracle import (
    ModalProblem,
    discrete_modal_solve,
    fundamental,
    modal_load,
    residual_check,
    solve_modal,
)
from stwave.temporal import TimePartition

T_PTS = np.linspace(0.0, 3.0, 13)


class TestClosedForms:
    @pytest.mark.parametrize(
        "beta, lam, exact",
        [
            (0.0, 1.0, lambda t: np.cos(t)),
            (2.0, 1.0, lambda t: (1 + t) * np.exp(-t)),
            (3.0, 2.0, lambda t: 2 * np.exp(-t) - np.exp(-2 * t)),
            (1.0, 0.0, lambda t: np.ones_like(t)),
            (0.0, 0.0, lambda t: np.ones_like(t)),
        ],
    )
    def test_homogeneous_unit_value(self, beta, lam, exact):
        c, _ = solve_modal(ModalProblem(beta, lam, alpha0=1.0), T_PTS)
        np.testing.assert_allclose(c, exact(T_PTS), atol=1e-14)

    @pytest.mark.parametrize(
        "beta, lam, exact",
        [
            (0.0, 4.0, lambda t: np.sin(2 * t) / 2),
            (2.0, 1.0, lambda t: t * np.exp(-t)),
            (3.0, 2.0, lambda t: np.exp(-t) - np.exp(-2 * t)),
            (1.0, 0.0, lambda t: 1 - np.exp(-t)),
            (0.0, 0.0, lambda t: t),
        ],
    )
    def test_homogeneous_unit_velocity(self, beta, lam, exact):
        c, dc = solve_modal(ModalProblem(beta, lam, v0=1.0), T_PTS)
        np.testing.assert_allclose(c, exact(T_PTS), atol=1e-14)
        assert dc[0] == pytest.approx(1.0)

    def test_sympy_forced(self):
        t = sympy.symbols("t")
        c = sympy.Function("c")
        beta, lam = 1, 3
        ode = sympy.Eq(c(t).diff(t, 2) + beta * c(t).diff(t) + lam * c(t), t**2 - 1)
        sol = sympy.dsolve(ode, ics={c(0): 2, c(t).diff(t).subs(t, 0): -1}).rhs
        f = sympy.lambdify(t, sol, "numpy")
        p = ModalProblem(beta, lam, 2.0, -1.0, Polynomial([-1.0, 0.0, 1.0]))
        np.testing.assert_allclose(solve_modal(p, T_PTS)[0], f(T_PTS), atol=1e-12)

    @pytest.mark.parametrize("beta, lam", [(0.0, 1.0), (2.0, 1.0), (3.0, 2.0), (1.0, 0.0), (0.0, 0.0), (5.0, 0.5)])
    def test_polynomial_vs_duhamel(self, beta, lam):
        poly = Polynomial([0.5, -1.0, 2.0, 0.3])
        p = ModalProblem(beta, lam, 0.7, -0.2, poly)
        a = solve_modal(p, T_PTS, method="polynomial")
        b = solve_modal(p, T_PTS, method="duhamel")
        np.testing.assert_allclose(a[0], b[0], atol=1e-9)
        np.testing.assert_allclose(a[1], b[1], atol=1e-9)

    @pytest.mark.parametrize("beta, lam", [(0.0, 1.0), (2.0, 1.0), (3.0, 2.0), (1.0, 0.0), (0.5, 9.0)])
    def test_residual(self, beta, lam):
        p = ModalProblem(beta, lam, 1.0, 0.5, lambda t: np.cos(2 * t))
        assert residual_check(p, np.linspace(0.1, 2.0, 9)) < 1e-6

    @given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 4))
    def test_derivative_consistency(self, beta, lam, t):
        # y1' = -lam g and g' = y1 - beta g, checked by central differences
        d = 1e-5
        y1p, gp = fundamental(beta, lam, t + d)
        y1m, gm = fundamental(beta, lam, max(t - d, 0.0))
        span = t + d - max(t - d, 0.0)
        y1, g = fundamental(beta, lam, t)
        scale = 1 + abs(y1) + abs(g) + lam + beta
        assert (y1p - y1m) / span == pytest.approx(-lam * g, abs=1e-4 * scale)
        assert (gp - gm) / span == pytest.approx(y1 - beta * g, abs=1e-4 * scale)

    def test_near_critical_continuous(self):
        # solutions depend Lipschitz-continuously on the discriminant near beta^2 = 4 lam
        base, _ = solve_modal(ModalProblem(2.0, 1.0, 1.0, 0.3), T_PTS)
        for delta in (1e-10, 1e-8, 1e-6, 1e-4):
            for sign in (1, -1):
                lam = 1.0 + sign * delta / 4
                c, _ = solve_modal(ModalProblem(2.0, lam, 1.0, 0.3), T_PTS)
                assert np.max(np.abs(c - base)) <= 0.5 * delta + 1e-14

    def test_large_overdamped_no_overflow(self):
        c, _ = solve_modal(ModalProblem(200.0, 1.0, 1.0), np.array([50.0]))
        m1, m2 = -100 + math.sqrt(9999), -100 - math.sqrt(9999)
        # the fast mode has decayed below double precision
        assert c[0] == pytest.approx(m2 / (m2 - m1) * math.exp(50 * m1), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            ModalProblem(-1.0, 1.0)
        with pytest.raises(ValueError):
            ModalProblem(1.0, float("nan"))
        with pytest.raises(ValueError):
            solve_modal(ModalProblem(), -1.0)
        with pytest.raises(ValueError):
            solve_modal(ModalProblem(), 1.0, method="euler")
        with pytest.raises(TypeError):
            solve_modal(ModalProblem(forcing=np.sin), 1.0, method="polynomial")
        assert ModalProblem(2.0, 1.0).regime == "critical"
        assert ModalProblem(3.0, 1.0).regime == "overdamped"
        assert ModalProblem(0.0, 1.0).regime == "underdamped"


class TestDiscrete:
    @pytest.mark.parametrize("beta, lam", [(0.0, 1.0), (2.0, 1.0), (3.0, 2.0), (1.0, 0.0)])
    def test_convergence_order(self, beta, lam):
        p = ModalProblem(beta, lam, 1.0, 1.0)
        exact = lambda t: solve_modal(p, t)[0]  # noqa: E731
        errs = []
        for N in (8, 16, 32, 64):
            d = discrete_modal_solve(lam, beta, TimePartition.equidistant(2.0, N), alpha0=1.0, v0=1.0)
            errs.append(d.max_nodal_error(exact))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9)

    def test_forced_with_velocity(self):
        p = ModalProblem(0.5, 2.0, 0.3, -0.7, np.cos)
        exact = lambda t: solve_modal(p, t)[0]  # noqa: E731
        errs = [
            discrete_modal_solve(2.0, 0.5, TimePartition.equidistant(1.5, N), 0.3, -0.7, np.cos).max_nodal_error(exact)
            for N in (8, 16)
        ]
        assert errs[1] < 1e-6 and errs[0] / errs[1] > 4

    def test_load(self):
        part = TimePartition.equidistant(1.0, 2)
        b = modal_load(part, lambda t: 1.0)
        # test functions l = 0..3 integrate to h/6, 2h/3, h/3, 2h/3 with h = 1/2
        np.testing.assert_allclose(b, [1 / 12, 1 / 3, 1 / 6, 1 / 3], atol=1e-15)
        assert np.all(modal_load(part, None) == 0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            discrete_modal_solve(-1.0, 0.0, TimePartition.equidistant(1.0, 2))
