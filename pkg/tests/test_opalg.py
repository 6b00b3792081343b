import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nesslab import (
    DenseOperator,
    apply_function,
    commutator,
    embed,
    observable_lambda_norm_upper,
    op_norm,
    spectral,
    trace,
    unitary_conj,
)
from nesslab.opalg import identity, zero

from conftest import ID2, SX, SY, SZ, random_hermitian, random_unitary


def embed_via_permutation(mat, op_sites, all_sites, dims_by_site):
    """Oracle: kron with trailing identity, then permute basis indices.

    Builds the permutation matrix explicitly from mixed-radix index
    arithmetic; deliberately different from the implementation's axis
    transposition.
    """
    rest = [s for s in all_sites if s not in op_sites]
    order = list(op_sites) + rest  # site order of the naive kron
    dim_rest = int(np.prod([dims_by_site[s] for s in rest])) if rest else 1
    big = np.kron(mat, np.eye(dim_rest))
    dims_order = [dims_by_site[s] for s in order]
    dim = int(np.prod(dims_order))
    perm = np.zeros((dim, dim))
    for idx in range(dim):
        # digits of idx in the naive order, re-read in canonical order
        rem = idx
        digits = {}
        for s, d in zip(order[::-1], dims_order[::-1]):
            digits[s] = rem % d
            rem //= d
        target = 0
        for s in all_sites:
            target = target * dims_by_site[s] + digits[s]
        perm[target, idx] = 1.0
    return perm @ big @ perm.T


class TestEmbed:
    def test_identity_maps_to_identity(self):
        one = identity((1,), (2,))
        out = embed(one, (0, 1, 2), (2, 2, 2))
        np.testing.assert_allclose(out.matrix, np.eye(8), atol=1e-15)

    def test_leading_identity_kron(self):
        a = DenseOperator((1,), (2,), SX)
        out = embed(a, (0, 1), (2, 2))
        np.testing.assert_allclose(out.matrix, np.kron(ID2, SX), atol=1e-15)

    def test_matches_permutation_oracle(self):
        rng = np.random.default_rng(7)
        dims_by_site = {0: 2, 1: 3, 2: 2}
        mat = random_hermitian(rng, 4)
        a = DenseOperator((0, 2), (2, 2), mat)
        out = embed(a, (0, 1, 2), (2, 3, 2))
        expected = embed_via_permutation(mat, (0, 2), (0, 1, 2), dims_by_site)
        np.testing.assert_allclose(out.matrix, expected, atol=1e-13)

    def test_is_algebra_morphism(self):
        rng = np.random.default_rng(11)
        a = DenseOperator((0, 2), (2, 2), random_hermitian(rng, 4))
        b = DenseOperator((0, 2), (2, 2), random_hermitian(rng, 4))
        lhs = embed(a, (0, 1, 2), (2, 2, 2)) @ embed(b, (0, 1, 2), (2, 2, 2))
        rhs = embed(a @ b, (0, 1, 2), (2, 2, 2))
        np.testing.assert_allclose(lhs.matrix, rhs.matrix, atol=1e-13)

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_isometric_for_operator_norm(self, seed):
        rng = np.random.default_rng(seed)
        a = DenseOperator((1,), (2,), random_hermitian(rng, 2))
        out = embed(a, (0, 1, 3), (2, 2, 3))
        assert op_norm(out) == pytest.approx(op_norm(a), abs=1e-10)

    def test_volume_must_contain_support(self):
        a = DenseOperator((1,), (2,), SX)
        with pytest.raises(ValueError):
            embed(a, (0, 2), (2, 2))

    def test_dimension_mismatch_rejected(self):
        a = DenseOperator((1,), (2,), SX)
        with pytest.raises(ValueError):
            embed(a, (0, 1), (2, 3))

    def test_support_is_preserved(self):
        a = DenseOperator((1,), (2,), SX)
        assert embed(a, (0, 1, 2), (2, 2, 2)).support == frozenset({1})


class TestCommutator:
    def test_pauli_algebra(self):
        a = DenseOperator((0,), (2,), SZ)
        b = DenseOperator((0,), (2,), SX)
        np.testing.assert_allclose(commutator(a, b).matrix, 2j * SY, atol=1e-15)

    def test_with_identity_vanishes(self):
        rng = np.random.default_rng(0)
        a = DenseOperator((0, 1), (2, 2), random_hermitian(rng, 4))
        np.testing.assert_allclose(commutator(a, identity((0, 1), (2, 2))).matrix,
                                   np.zeros((4, 4)), atol=1e-15)

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        a = DenseOperator((0, 1), (2, 2), random_hermitian(rng, 4))
        b = DenseOperator((0, 1), (2, 2), random_hermitian(rng, 4))
        np.testing.assert_allclose(commutator(a, b).matrix,
                                   -commutator(b, a).matrix, atol=1e-13)

    def test_volume_mismatch(self):
        a = DenseOperator((0,), (2,), SX)
        b = DenseOperator((1,), (2,), SX)
        with pytest.raises(ValueError):
            commutator(a, b)


class TestSpectral:
    def test_diagonal_sorting(self):
        sd = spectral(np.diag([3.0, 1.0, 2.0]).astype(complex))
        np.testing.assert_allclose(sd.eigenvalues, [1.0, 2.0, 3.0])
        for value, proj in zip(sd.eigenvalues, sd.projections):
            idx = [3.0, 1.0, 2.0].index(value)
            expected = np.zeros((3, 3))
            expected[idx, idx] = 1.0
            np.testing.assert_allclose(proj, expected, atol=1e-12)

    def test_pauli_x_projections(self):
        sd = spectral(SX)
        np.testing.assert_allclose(sd.eigenvalues, [-1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(sd.projections[0], 0.5 * (ID2 - SX), atol=1e-12)
        np.testing.assert_allclose(sd.projections[1], 0.5 * (ID2 + SX), atol=1e-12)

    def test_scalar_matrix_groups_to_single_projection(self):
        sd = spectral(2.5 * np.eye(4, dtype=complex))
        assert len(sd.projections) == 1
        np.testing.assert_allclose(sd.eigenvalues, [2.5])
        np.testing.assert_allclose(sd.projections[0], np.eye(4), atol=1e-12)

    def test_invariants_on_random_hermitian(self):
        rng = np.random.default_rng(21)
        mat = random_hermitian(rng, 6)
        sd = spectral(mat)
        total = sum(sd.projections)
        np.testing.assert_allclose(total, np.eye(6), atol=1e-10)
        for j, pj in enumerate(sd.projections):
            for k, pk in enumerate(sd.projections):
                expected = pj if j == k else np.zeros((6, 6))
                np.testing.assert_allclose(pj @ pk, expected, atol=1e-10)
        recon = sum(a * p for a, p in zip(sd.eigenvalues, sd.projections))
        assert np.max(np.abs(recon - mat)) <= 1e-10 * max(1.0, op_norm(mat))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            spectral(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))


class TestApplyFunction:
    def test_identity_function(self):
        rng = np.random.default_rng(3)
        mat = random_hermitian(rng, 5)
        np.testing.assert_allclose(apply_function(mat, lambda s: s), mat, atol=1e-12)

    def test_exp_of_diagonal(self):
        out = apply_function(np.diag([0.0, math.log(2.0)]).astype(complex), math.exp)
        np.testing.assert_allclose(out, np.diag([1.0, 2.0]), atol=1e-13)

    def test_exp_matches_power_series(self):
        # oracle: truncated power series of exp(t sx)
        t = 0.3
        series = np.zeros((2, 2), dtype=complex)
        power = np.eye(2, dtype=complex)
        for m in range(30):
            series += power
            power = power @ (t * SX) / (m + 1)
        out = apply_function(t * SX, math.exp)
        assert np.max(np.abs(out - series)) <= 1e-10

    def test_composition(self):
        rng = np.random.default_rng(9)
        mat = random_hermitian(rng, 6)
        inner = apply_function(mat, math.exp)          # monotone inner map
        lhs = apply_function(inner, lambda s: math.log(s) ** 2)
        rhs = apply_function(mat, lambda s: s**2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * max(1.0, op_norm(rhs))

    def test_exp_i_h_is_unitary(self):
        rng = np.random.default_rng(13)
        mat = random_hermitian(rng, 6)
        sd = spectral(mat)
        u = sd.unitary(1.0)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(6), atol=1e-10)

    def test_propagates_evaluation_errors(self):
        with pytest.raises(ValueError):
            apply_function(np.diag([-1.0, 1.0]).astype(complex), math.sqrt)


class TestNormTraceConjugation:
    def test_norm_of_diagonal(self):
        assert op_norm(np.diag([1.0, -3.0]).astype(complex)) == pytest.approx(3.0)

    def test_trace_cyclicity_under_conjugation(self):
        rng = np.random.default_rng(17)
        a = random_hermitian(rng, 4)
        u = random_unitary(rng, 4)
        assert trace(unitary_conj(u, a)) == pytest.approx(trace(a), abs=1e-12)

    def test_norm_unitary_invariance(self):
        rng = np.random.default_rng(19)
        a = random_hermitian(rng, 4)
        u = random_unitary(rng, 4)
        assert op_norm(unitary_conj(u, a)) == pytest.approx(op_norm(a), abs=1e-10)

    def test_non_unitary_rejected(self):
        with pytest.raises(ValueError):
            unitary_conj(np.diag([2.0, 1.0]).astype(complex), SX)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            unitary_conj(np.eye(4, dtype=complex), SX)


class TestObservableNormUpper:
    def test_single_term(self):
        rng = np.random.default_rng(23)
        mat = random_hermitian(rng, 4)
        bound = observable_lambda_norm_upper([((0, 1), mat)], 0.7)
        assert bound == pytest.approx(op_norm(mat) * math.exp(1.4), rel=1e-12)

    def test_halving_is_neutral(self):
        rng = np.random.default_rng(29)
        mat = random_hermitian(rng, 4)
        whole = observable_lambda_norm_upper([((0, 1), mat)], 0.7)
        halves = observable_lambda_norm_upper([((0, 1), 0.5 * mat), ((0, 1), 0.5 * mat)], 0.7)
        assert halves == pytest.approx(whole, rel=1e-12)

    def test_finer_decomposition_beats_coarse(self):
        lam = 1.0
        coarse = observable_lambda_norm_upper(
            [((0, 1), np.kron(SZ, ID2) + np.kron(ID2, SZ))], lam)
        fine = observable_lambda_norm_upper([((0,), SZ), ((1,), SZ)], lam)
        assert fine == pytest.approx(2.0 * math.exp(lam), rel=1e-12)
        assert coarse == pytest.approx(2.0 * math.exp(2.0 * lam), rel=1e-12)
        assert fine < coarse


class TestDenseOperator:
    def test_matrix_shape_checked(self):
        with pytest.raises(ValueError):
            DenseOperator((0, 1), (2, 2), np.eye(3))

    def test_volume_ordering_enforced(self):
        with pytest.raises(ValueError):
            DenseOperator((1, 0), (2, 2), np.eye(4))

    def test_zero_has_empty_support(self):
        assert zero((0, 1), (2, 2)).support == frozenset()
