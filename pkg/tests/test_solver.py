import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecs.lattice import ModelParams, ResonanceEncountered, free_energy
from ecs.oracle import build_truncated_operator, nearest_eigenvalues, oracle_eigenpair
from ecs.solver import (
    NoConvergence,
    TruncationPolicy,
    alpha_terms,
    default_constants,
    degenerate_solve,
    explicit_solve,
    g_series,
    implicit_solve,
    perturbative_solve,
    phi_series,
    phi_series_reference,
)

SOLVERS = (perturbative_solve, implicit_solve, explicit_solve)


@pytest.fixture(scope="module")
def lame():
    return ModelParams.make(2, 2.5, 0.05)


@pytest.fixture(scope="module")
def lame_oracle(lame):
    out = {}
    for n in [(0, 0), (1, 0), (2, 1)]:
        op = build_truncated_operator(n, lame, 16)
        out[n] = oracle_eigenpair(op, n)
    return out


class TestTrigonometricLimit:
    @pytest.mark.parametrize("solver", SOLVERS)
    @pytest.mark.parametrize("N,lam", [(2, 0.7), (3, 1.5), (3, math.sqrt(2))])
    def test_exact_free_energy(self, solver, N, lam):
        p = ModelParams.make(N, lam, 0.0)
        for n in [(0,) * N, (1,) + (0,) * (N - 1), (2, 1) + (0,) * (N - 2)]:
            assert solver(n, p).eigenvalue == free_energy(n, p)

    def test_explicit_terms_vanish(self):
        r = explicit_solve((1, 0), ModelParams.make(2, 2.5, 0.0), eta_order=4)
        assert r.eta_terms == [0.0] * 4


class TestWalk:
    @pytest.mark.parametrize("R", [0, 1, 2])
    def test_matches_path_enumeration(self, R):
        p = ModelParams.make(2, 2.5, 0.2)
        pol = TruncationPolicy(nu_cutoff=3, shell_radius=4, phi_depth=4)
        ref = phi_series_reference(0.1, (1, 0), p, depth=4, nu_cutoff=3, radius=4, R=R)
        got = phi_series(0.1, (1, 0), p, pol, R=R).derivative_values
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)

    def test_taylor_coefficients_by_differences(self, lame):
        h = 1e-3
        ev = phi_series(0.1, (1, 0), lame, R=2)
        fd1 = (phi_series(0.1 + h, (1, 0), lame).value - phi_series(0.1 - h, (1, 0), lame).value) / (2 * h)
        assert ev.derivative_values[1] == pytest.approx(fd1, rel=1e-5)

    def test_g_at_base_is_one(self, lame):
        assert g_series(0.0, (1, 0), (1, 0), lame) == 1.0


class TestAgainstOracle:
    @pytest.mark.parametrize("n", [(0, 0), (1, 0), (2, 1)])
    def test_implicit(self, lame, lame_oracle, n):
        E, cmap, _ = lame_oracle[n]
        r = implicit_solve(n, lame)
        assert r.eigenvalue == pytest.approx(E, abs=1e-10)
        for m, v in cmap.restrict(4).items_absolute():
            assert r.coefficients[m] == pytest.approx(v, abs=1e-8)

    @pytest.mark.parametrize("n", [(1, 0), (2, 1)])
    def test_methods_agree_on_gated_targets(self, lame, n):
        vals = [s(n, lame).eigenvalue for s in SOLVERS]
        assert max(vals) - min(vals) < 1e-9

    def test_fixed_point_residual(self, lame):
        r = implicit_solve((1, 0), lame)
        et = r.eigenvalue - r.diagnostics["E0"]
        assert phi_series(et, (1, 0), lame).value == pytest.approx(et, abs=1e-13)


class TestExplicit:
    def test_gate_and_enclosure(self, lame):
        r = explicit_solve((1, 0), lame)
        assert r.gate.gate_passed and r.gate.enclosure_ok
        assert r.diagnostics["alpha_bound_ratio"] <= 1.0

    def test_alpha_terms_sum_to_coefficients(self, lame):
        r = explicit_solve((2, 1), lame, eta_order=6)
        pieces = alpha_terms(r, lame, TruncationPolicy())
        for m, v in r.coefficients.restrict(3).items_absolute():
            assert sum(p[m] for p in pieces) == pytest.approx(v, abs=1e-13)

    @settings(max_examples=10)
    @given(st.floats(0.005, 0.05))
    def test_eta_terms_shrink(self, q):
        r = explicit_solve((1, 0), ModelParams.make(2, 2.5, q), eta_order=5)
        mags = [abs(t) for t in r.eta_terms]
        assert all(a > b for a, b in zip(mags, mags[1:]))


class TestPerturbative:
    def test_first_order_vanishes(self, lame):
        r = perturbative_solve((1, 0), lame)
        assert r.orders["E"][1] == 0.0

    def test_second_order_closed_form(self, lame):
        # E^(2) = -sum_m S(n<-m) S(m<-n) / (E0(m) - E0(n)) over single shifts
        from ecs.elliptic import s_coeff

        n = (1, 0)
        acc = 0.0
        for nu in range(-8, 9):
            if nu == 0:
                continue
            m = (n[0] + nu, n[1] - nu)
            acc += s_coeff(nu, lame.nome) * s_coeff(-nu, lame.nome) / (free_energy(m, lame) - free_energy(n, lame))
        r = perturbative_solve(n, lame)
        assert r.orders["E"][2] == pytest.approx(-acc, rel=1e-12)


class TestResonances:
    def test_explicit_raises_with_vector(self):
        p = ModelParams.make(2, 2.0, 0.05)
        with pytest.raises(ResonanceEncountered) as info:
            explicit_solve((0, 0), p)
        assert info.value.vector == (-2, 2)

    def test_degenerate_branches_match_oracle(self):
        p = ModelParams.make(2, 2.0, 0.05)
        branches = degenerate_solve((0, 0), p)
        assert len(branches) == 2
        op = build_truncated_operator((0, 0), p, 16)
        near = nearest_eigenvalues(op, free_energy((0, 0), p), 2)
        got = sorted(b.eigenvalue for b in branches)
        np.testing.assert_allclose(got, near, atol=1e-6)

    def test_default_constants_none_at_q0_with_unreachable_resonance(self):
        assert default_constants((0, 0, 0), ModelParams.make(3, 1.5, 0.0)) is None


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(s_max=0)
    with pytest.raises(ValueError):
        TruncationPolicy(phi_depth=0)


def test_non_partition_flag(lame):
    assert "non-partition" in implicit_solve((0, 1), lame).flags


def test_walk_divergence_reported():
    p = ModelParams.make(2, 2.5, 0.6)
    with pytest.raises(NoConvergence), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        implicit_solve((0, 0), p, TruncationPolicy(shell_radius=6), max_iter=3)
