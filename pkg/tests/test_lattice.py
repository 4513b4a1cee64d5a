import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from ecs.lattice import (
    EXHAUSTIVE_SEARCH,
    N2_CLOSED_FORM,
    RATIONAL_GRID,
    CoefficientMap,
    HypothesisConstants,
    HypothesisError,
    ModelParams,
    ResonanceEncountered,
    Shell,
    alpha_bound,
    apply_shift_operator,
    bound_b,
    check_hypothesis,
    cycle_residual,
    elementary_shifts,
    enclosure_radius,
    find_resonances,
    free_energy,
    g_bound,
    gate,
    hypothesis_constants,
    is_partition,
    phi_bound,
    relative_shell,
)
from ecs.oracle import build_truncated_operator


def test_free_energy_values():
    p = ModelParams.make(2, 2.5, 0.1)
    assert free_energy((0, 0), p) == 3.125
    assert free_energy((1, 0), p) == pytest.approx(2.25**2 + 1.25**2)
    p3 = ModelParams.make(3, 1.0, 0.0)
    assert free_energy((0, 0, 0), p3) == 2.0


def test_free_energy_shape_check():
    with pytest.raises(ValueError):
        free_energy((0, 0, 0), ModelParams.make(2, 1.5, 0.1))


def test_params_derived():
    p = ModelParams.make(3, 2.5, 0.2)
    assert p.gamma == 2 * 2.5 * 1.5
    assert p.beta == pytest.approx(-2 * math.log(0.2))
    assert p.with_q(0.3).q == 0.3


@pytest.mark.parametrize("n,ok", [((2, 1, 0), True), ((1, 1), True), ((0, 1), False), ((1, -1), False), ((), True)])
def test_is_partition(n, ok):
    assert is_partition(n) is ok


@pytest.mark.parametrize("N,r", [(2, 3), (3, 2), (4, 1)])
def test_relative_shell_counts(N, r):
    shell = relative_shell(N, r)
    brute = [d for d in np.ndindex(*(2 * r + 1,) * N) if sum(d) == N * r]
    assert len(shell) == len(brute)
    assert all(sum(d) == 0 and max(map(abs, d)) <= r for d in shell)


def test_elementary_shifts_count():
    assert len(elementary_shifts(3, 4)) == 3 * 8


def test_shift_operator_matches_dense_operator():
    # oracle: the truncated matrix carries -gamma S in its off-diagonal part
    p = ModelParams.make(2, 2.5, 0.2)
    op = build_truncated_operator((0, 0), p, cutoff=5)
    rng = np.random.default_rng(4)
    vec = rng.normal(size=op.size)
    off = -(op.matrix - np.diag(np.diag(op.matrix))) / p.gamma
    cmap = CoefficientMap((0, 0), dict(zip(op.basis, vec)))
    out = apply_shift_operator(cmap, p, nu_cutoff=10)
    ref = off @ vec
    for i, d in enumerate(op.basis):
        assert out.entries.get(d, 0.0) == pytest.approx(ref[i], abs=1e-12)


def test_shell_matrix_matches_shift_operator():
    p = ModelParams.make(3, 1.5, 0.3)
    sh = Shell((1, 0, 0), p, radius=3, nu_cutoff=3)
    v = np.zeros(sh.size)
    v[sh.center] = 1.0
    pushed = sh.shift_matrix @ v
    ref = apply_shift_operator(CoefficientMap((1, 0, 0), {(0, 0, 0): 1.0}), p, 3)
    for i, d in enumerate(sh.rel):
        assert pushed[i] == pytest.approx(ref.entries.get(d, 0.0))


def test_shell_reachability_at_q0():
    p = ModelParams.make(2, 1.5, 0.0)
    sh = Shell((0, 0), p, radius=4, nu_cutoff=4)
    reach = sh.reachable()
    # only upward shifts exist: first component can only grow
    assert all(d[0] >= 0 for d, r in zip(sh.rel, reach) if r)


def test_cycle_residual_zero_for_single_step():
    assert cycle_residual([0, 1], 3) == (0, 0, 0)
    assert cycle_residual([0, 1, 2], 3) == (0, 0, 0)


class TestConstants:
    def test_resonance_vector_for_integer_lambda(self):
        p = ModelParams.make(2, 2.0, 0.05)
        with pytest.raises(ResonanceEncountered) as info:
            hypothesis_constants((0, 0), p, N2_CLOSED_FORM)
        assert info.value.vector == (-2, 2)
        assert (-2, 2) in find_resonances((0, 0), p, 6)

    @given(st.floats(0.55, 4.45), st.integers(0, 3), st.integers(0, 3))
    def test_closed_form_matches_search(self, lam, a, b):
        assume(abs(lam - round(lam)) > 0.05)
        p = ModelParams.make(2, lam, 0.1)
        n = (max(a, b), min(a, b))
        cf = hypothesis_constants(n, p, N2_CLOSED_FORM)
        ex = hypothesis_constants(n, p, EXHAUSTIVE_SEARCH, radius=12)
        assert cf.delta == pytest.approx(ex.delta, rel=1e-12)
        assert cf.certified and not ex.certified

    def test_rational_grid(self):
        p = ModelParams.make(2, 2.5, 0.1)
        c = hypothesis_constants((1, 0), p, RATIONAL_GRID, lam_fraction=Fraction(5, 2))
        assert c.a == pytest.approx(0.25) and c.delta == pytest.approx(0.25)
        assert check_hypothesis((1, 0), p, c, 8) >= c.delta - 1e-12

    def test_rational_grid_rejects_irrational(self):
        with pytest.raises(HypothesisError):
            hypothesis_constants((0, 0), ModelParams.make(2, math.sqrt(2), 0.1), RATIONAL_GRID)

    def test_invalid_constants(self):
        with pytest.raises(ValueError):
            HypothesisConstants(0.0, -1.0, EXHAUSTIVE_SEARCH)
        with pytest.raises(ValueError):
            HypothesisConstants(0.0, 1.0, "bogus")


class TestGate:
    def test_gate_passing_example(self):
        p = ModelParams.make(2, 2.5, 0.05)
        c = hypothesis_constants((1, 0), p, N2_CLOSED_FORM)
        B, ok = gate(p, c)
        assert B == pytest.approx(0.874763, abs=5e-7)
        assert ok

    def test_gate_fails_for_ground_state_at_larger_q(self):
        p = ModelParams.make(2, 2.5, 0.1)
        c = hypothesis_constants((0, 0), p, N2_CLOSED_FORM)
        assert not gate(p, c)[1]

    def test_b_vanishes_at_q0(self):
        assert bound_b(ModelParams.make(3, 1.5, 0.0)) == 0.0

    @given(st.floats(0.01, 0.3))
    def test_b_monotone_in_b_param(self, q):
        p = ModelParams.make(2, 2.5, q)
        assert bound_b(p, 0.0) <= bound_b(p, 0.5) <= bound_b(p, 1.0)

    def test_enclosure_and_alpha_bounds(self):
        p = ModelParams.make(2, 2.5, 0.05)
        c = hypothesis_constants((1, 0), p, N2_CLOSED_FORM)
        B = bound_b(p)
        r = enclosure_radius(B, c)
        assert 0 < r < c.delta
        assert alpha_bound((0, 0), p, c) > 1.0
        # decay along sum_j j m_j > 0, growth the other way
        assert alpha_bound((-3, 3), p, c) < alpha_bound((-1, 1), p, c) < alpha_bound((1, -1), p, c)
        p0 = ModelParams.make(2, 2.5, 0.0)
        assert alpha_bound((-1, 1), p0, c) == 0.0
        assert alpha_bound((1, -1), p0, c) > 0.0

    def test_region_bounds(self):
        p = ModelParams.make(2, 2.5, 0.05)
        c = hypothesis_constants((1, 0), p, N2_CLOSED_FORM)
        B = bound_b(p)
        assert phi_bound(c.a, p, c) == pytest.approx(B * B / (c.delta - B))
        assert g_bound((0, 0), c.a, p, c) > 1.0
        with pytest.raises(HypothesisError):
            phi_bound(c.a + c.delta, p, c)
