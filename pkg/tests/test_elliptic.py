"""Elliptic functions against mpmath references and their functional identities."""
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecs.elliptic import (
    EllipticConfig,
    EllipticDomainError,
    Nome,
    c0,
    c0_sinh_form,
    capital_theta,
    fourier_tail_bound,
    fourier_terms,
    jacobi_theta1,
    phi_fun,
    potential_v,
    potential_v_fourier,
    rel_identity_residual,
    s_coeff,
    theta,
    theta1_normalization,
)

nomes = st.floats(min_value=0.01, max_value=0.6)
reals = st.floats(min_value=0.05, max_value=2 * math.pi - 0.05)


def mp_theta(r, q):
    # product form at the caller's working precision
    r = mpmath.mpf(r)
    q = mpmath.mpf(q)
    out = mpmath.sin(r / 2)
    for n in range(1, 200):
        p = q ** (2 * n)
        out *= 1 - 2 * p * mpmath.cos(r) + p * p
    return out


class TestTheta:
    @pytest.mark.parametrize("q", [0.05, 0.2, 0.5])
    def test_matches_jacobi_theta1(self, q):
        nome = Nome(q)
        r = np.linspace(0.3, 6.0, 7)
        k = theta1_normalization(nome)
        ref = np.array([float(k * mpmath.jtheta(1, v / 2, q)) for v in r])
        np.testing.assert_allclose(theta(r, nome), ref, rtol=1e-13)

    def test_internal_jacobi_series(self):
        u = np.linspace(-1, 1, 5)
        ref = [float(mpmath.jtheta(1, v, 0.3)) for v in u]
        np.testing.assert_allclose(jacobi_theta1(u, 0.3), ref, atol=1e-14)

    def test_trigonometric_limit(self):
        r = np.linspace(0.1, 6, 9)
        np.testing.assert_array_equal(theta(r, Nome(0.0)), np.sin(r / 2))

    @given(nomes, reals)
    def test_odd_and_antiperiodic(self, q, r):
        nome = Nome(q)
        assert theta(-r, nome) == pytest.approx(-theta(r, nome), rel=1e-13, abs=1e-15)
        assert theta(r + 2 * math.pi, nome) == pytest.approx(-theta(r, nome), rel=1e-12, abs=1e-14)

    @given(nomes, reals)
    def test_against_mpmath_product(self, q, r):
        with mpmath.workdps(40):
            ref = float(mp_theta(r, q))
        assert theta(r, Nome(q)) == pytest.approx(ref, rel=1e-12, abs=1e-15)

    def test_high_precision_path_agrees(self):
        nome = Nome(0.3)
        hp = EllipticConfig(precision_digits=30)
        assert theta(1.1, nome, hp) == pytest.approx(theta(1.1, nome), rel=1e-14)
        assert potential_v(0.7, nome, hp) == pytest.approx(potential_v(0.7, nome), rel=1e-13)


class TestPotential:
    @pytest.mark.parametrize("q,r", [(0.1, 1.3), (0.3, 0.4), (0.5, 2.9)])
    def test_is_minus_second_log_derivative(self, q, r):
        with mpmath.workdps(40):
            ref = -mpmath.diff(lambda v: mpmath.log(mp_theta(v, q)), r, 2)
        assert potential_v(r, Nome(q)) == pytest.approx(float(ref), rel=1e-12)

    @given(nomes, reals)
    def test_even_and_periodic(self, q, r):
        nome = Nome(q)
        v = potential_v(r, nome)
        assert potential_v(-r, nome) == pytest.approx(v, rel=1e-12)
        assert potential_v(r + 2 * math.pi, nome) == pytest.approx(v, rel=1e-10)

    def test_pole_guard(self):
        with pytest.raises(EllipticDomainError):
            potential_v(0.0, Nome(0.1))
        with pytest.raises(EllipticDomainError):
            phi_fun(2 * math.pi, Nome(0.1))

    @pytest.mark.parametrize("q", [0.0, 0.1, 0.3, 0.7])
    def test_c0_forms_agree(self, q):
        assert c0(Nome(q)) == pytest.approx(c0_sinh_form(Nome(q)), rel=1e-13, abs=1e-15)

    def test_c0_trigonometric(self):
        assert c0(Nome(0.0)) == 1.0 / 12.0


class TestPhiAndF:
    @pytest.mark.parametrize("q,x", [(0.1, 0.8), (0.25, 2.2)])
    def test_phi_is_log_derivative(self, q, x):
        with mpmath.workdps(40):
            ref = mpmath.diff(lambda v: mpmath.log(mp_theta(v, q)), x)
        assert phi_fun(x, Nome(q)) == pytest.approx(float(ref), rel=1e-12)

    @given(
        st.floats(0.01, 0.5),
        st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
        st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
    )
    def test_three_point_identity(self, q, x, y):
        nome = Nome(q)
        lim = nome.beta / 8
        x = complex(x.real, max(-lim, min(lim, x.imag)))
        y = complex(y.real, max(-lim, min(lim, y.imag)))
        for v in (x, y, -x - y):
            if abs(math.sin(v.real / 2)) < 0.05 and abs(v.imag) < 0.05:
                return
        scale = max(1.0, abs(phi_fun(x, nome) * phi_fun(y, nome)))
        assert abs(rel_identity_residual(x, y, nome)) < 1e-9 * scale


class TestShiftCoefficients:
    def test_values(self):
        assert s_coeff(0, Nome(0.3)) == 0.0
        assert s_coeff(3, Nome(0.0)) == 3.0
        assert s_coeff(-3, Nome(0.0)) == 0.0
        assert s_coeff(2, Nome(0.5)) == pytest.approx(2 / (1 - 0.5**4))

    @given(st.integers(1, 40), nomes)
    def test_reflection(self, nu, q):
        nome = Nome(q)
        assert s_coeff(-nu, nome) == pytest.approx(q ** (2 * nu) * s_coeff(nu, nome), rel=1e-12)


class TestFourierSeries:
    @pytest.mark.parametrize("q,shift", [(0.2, 0.3), (0.1, 1.0), (0.4, 0.9)])
    def test_converges_to_v(self, q, shift):
        nome = Nome(q)
        K = fourier_terms(nome, shift, 1e-12)
        y = np.linspace(-3, 3, 11) - 1j * shift
        v = potential_v(y, nome)
        assert np.max(np.abs(v - potential_v_fourier(y, nome, K))) < 1e-10 * max(1, np.max(np.abs(v)))

    def test_tail_bound_decreases(self):
        nome = Nome(0.2)
        vals = [fourier_tail_bound(nome, 0.3, K) for K in (10, 20, 40, 80)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_outside_annulus(self):
        with pytest.raises(EllipticDomainError):
            fourier_tail_bound(Nome(0.2), -0.1, 10)


class TestCapitalTheta:
    @given(nomes, st.floats(0, 1), st.floats(0, 2 * math.pi))
    def test_modulus_bounds(self, q, t, ang):
        nome = Nome(q)
        r = math.exp((1 - t) * 2 * math.log(q) * 0.999 + 1e-9)
        z = r * complex(math.cos(ang), math.sin(ang))
        mag = abs(capital_theta(z, nome))
        assert capital_theta(r, nome).real <= mag * (1 + 1e-12)
        assert mag <= capital_theta(-r, nome).real * (1 + 1e-12)

    def test_zero_argument(self):
        with pytest.raises(EllipticDomainError):
            capital_theta(0.0, Nome(0.1))
