from __future__ import annotations

import numpy as np
import pytest

from coisolab.errors import DimensionMismatch, PointNotOnSubmanifold, RankDeficientJacobian
from coisolab.fields import (
    BivectorField,
    ConnectionField,
    LevelSetSubmanifold,
    PolyScalarField,
    covariant_derivative_pi,
    covariant_jacobi_residual,
    is_coisotropic_at,
    jacobiator,
    sharp_matrix,
)


def so3_field() -> BivectorField:
    return BivectorField.from_upper(3, {
        (0, 1): [(1.0, (0, 0, 1))],      # pi^{12} = x3
        (0, 2): [(-1.0, (0, 1, 0))],     # pi^{13} = -x2
        (1, 2): [(1.0, (1, 0, 0))],      # pi^{23} = x1
    })


def r4_nonpoisson() -> BivectorField:
    return BivectorField.from_upper(4, {
        (0, 1): [(1.0, (0, 0, 0, 0))],
        (2, 3): [(1.0, (1, 0, 0, 0))],   # pi^{34} = x1
    })


def random_poly(dim: int, degree: int, rng: np.random.Generator) -> PolyScalarField:
    terms = []
    for _ in range(4):
        exps = rng.integers(0, degree + 1, size=dim)
        while exps.sum() > degree:
            exps = rng.integers(0, degree + 1, size=dim)
        terms.append((float(rng.uniform(-1, 1)), tuple(int(e) for e in exps)))
    return PolyScalarField.from_terms(dim, terms)


def random_bivector(dim: int, degree: int, rng: np.random.Generator) -> BivectorField:
    return BivectorField.from_upper(dim, {
        (i, j): random_poly(dim, degree, rng)
        for i in range(dim) for j in range(i + 1, dim)
    })


def random_torsion_free(dim: int, degree: int, rng: np.random.Generator) -> ConnectionField:
    return ConnectionField.from_entries(dim, {
        (i, j, k): random_poly(dim, degree, rng)
        for i in range(dim) for j in range(dim) for k in range(j, dim)
    })


class TestPolyScalarField:
    def test_merges_duplicate_terms(self):
        f = PolyScalarField.from_terms(2, [(1.0, (1, 0)), (2.5, (1, 0)), (1.0, (0, 0))])
        assert f.terms == ((1.0, (0, 0)), (3.5, (1, 0)))

    def test_exact_partial_derivative(self):
        # d/dx1 of x1^2 x2 is 2 x1 x2
        f = PolyScalarField.from_terms(2, [(1.0, (2, 1))])
        assert f.partial(0)(np.array([3.0, 4.0])) == 24.0
        assert f.partial(1).terms == ((1.0, (2, 0)),)

    def test_vectorized_evaluation(self):
        f = PolyScalarField.from_terms(2, [(2.0, (1, 1))])
        pts = np.array([[1.0, 2.0], [3.0, -1.0]])
        np.testing.assert_array_equal(f(pts), [4.0, -6.0])

    def test_zero_field(self):
        z = PolyScalarField.zero(3)
        assert z.is_zero and z(np.zeros(3)) == 0.0

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatch):
            PolyScalarField.from_terms(2, [(1.0, (1, 0, 0))])
        f = PolyScalarField.coordinate(2, 0)
        with pytest.raises(DimensionMismatch):
            f(np.zeros(3))


class TestBivectorField:
    def test_rejects_non_skew_grid(self):
        one = PolyScalarField.constant(2, 1.0)
        zero = PolyScalarField.zero(2)
        with pytest.raises(ValueError):
            BivectorField(2, ((zero, one), (one, zero)))

    def test_matrix_exactly_skew(self):
        rng = np.random.default_rng(3)
        pi = random_bivector(3, 2, rng)
        for _ in range(20):
            x = rng.uniform(-2, 2, size=3)
            mat = pi.matrix(x)
            assert np.array_equal(mat, -mat.T)


class TestSharp:
    def test_zero_field(self):
        pi = BivectorField.zero(2)
        np.testing.assert_array_equal(sharp_matrix(pi, np.array([3.0, 7.0])), np.zeros((2, 2)))

    def test_constant_symplectic_dx2(self):
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0))]})
        s = sharp_matrix(pi, np.array([0.4, -1.2]))
        np.testing.assert_array_equal(s @ np.array([0.0, 1.0]), [-1.0, 0.0])

    def test_so3_dx3_example(self):
        s = sharp_matrix(so3_field(), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(s @ np.array([0.0, 0.0, 1.0]), [2.0, -1.0, 0.0], atol=0)

    def test_exactly_skew_on_samples(self):
        rng = np.random.default_rng(11)
        for dim in (2, 3, 4):
            pi = random_bivector(dim, 2, rng)
            for _ in range(10):
                s = sharp_matrix(pi, rng.uniform(-1, 1, size=dim))
                assert np.array_equal(s, -s.T)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sharp_matrix(so3_field(), np.zeros(2))


class TestJacobiator:
    def test_constant_field_identically_zero(self):
        pi = BivectorField.from_upper(4, {(0, 1): [(1.0, (0,) * 4)], (2, 3): [(2.0, (0,) * 4)]})
        np.testing.assert_array_equal(jacobiator(pi, np.array([1.0, -2.0, 0.5, 3.0])),
                                      np.zeros((4, 4, 4)))

    def test_so3_poisson_at_samples(self):
        pi = so3_field()
        rng = np.random.default_rng(0)
        for x in rng.uniform(-1, 1, size=(100, 3)):
            assert np.max(np.abs(jacobiator(pi, x))) <= 1e-12

    def test_r4_fixture_value(self):
        j = jacobiator(r4_nonpoisson(), np.array([1.0, 0.0, 0.0, 0.0]))
        assert j[1, 2, 3] == -1.0

    def test_total_antisymmetry_exact(self):
        rng = np.random.default_rng(5)
        pi = random_bivector(4, 2, rng)
        j = jacobiator(pi, rng.uniform(-1, 1, size=4))
        assert np.array_equal(j, -np.transpose(j, (1, 0, 2)))
        assert np.array_equal(j, -np.transpose(j, (0, 2, 1)))
        assert np.array_equal(j, np.transpose(j, (1, 2, 0)))


class TestCovariantDerivative:
    def test_flat_constant_zero(self):
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0))]})
        out = covariant_derivative_pi(pi, ConnectionField.flat(2), np.array([0.3, 0.4]))
        np.testing.assert_array_equal(out, np.zeros((2, 2, 2)))

    def test_so3_flat_is_epsilon(self):
        out = covariant_derivative_pi(so3_field(), ConnectionField.flat(3),
                                      np.array([0.2, -0.7, 1.1]))
        eps = np.zeros((3, 3, 3))
        for (i, j, k), sign in [((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
                                ((1, 0, 2), -1), ((0, 2, 1), -1), ((2, 1, 0), -1)]:
            eps[i, j, k] = sign
        np.testing.assert_allclose(out, eps, atol=0)

    def test_single_christoffel_term(self):
        # Gamma^1_{11} = 1, pi^{12} = 1: (nabla pi)^{12}_1 = Gamma^1_{11} pi^{12} = 1
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0))]})
        conn = ConnectionField.from_entries(2, {(0, 0, 0): [(1.0, (0, 0))]})
        out = covariant_derivative_pi(pi, conn, np.array([0.0, 0.0]))
        assert out[0, 1, 0] == 1.0

    def test_torsion_rejected(self):
        one = PolyScalarField.constant(2, 1.0)
        zero = PolyScalarField.zero(2)
        grid = [[[zero, zero], [zero, zero]], [[zero, one], [zero, zero]]]
        with pytest.raises(ValueError):
            ConnectionField(2, tuple(tuple(tuple(r) for r in p) for p in grid))


class TestCovariantJacobiResidual:
    def test_constant_flat_zero(self):
        pi = BivectorField.from_upper(3, {(0, 1): [(1.0, (0, 0, 0))]})
        assert covariant_jacobi_residual(pi, ConnectionField.flat(3), np.zeros(3)) == 0.0

    def test_so3_flat_near_zero(self):
        pi = so3_field()
        conn = ConnectionField.flat(3)
        rng = np.random.default_rng(1)
        for x in rng.uniform(-1, 1, size=(100, 3)):
            assert covariant_jacobi_residual(pi, conn, x) <= 1e-12

    def test_matches_jacobiator_for_torsion_free(self):
        # the Christoffel terms cancel identically for any torsion-free connection
        rng = np.random.default_rng(7)
        for trial in range(100):
            dim = int(rng.integers(2, 5))
            pi = random_bivector(dim, 2, rng)
            conn = random_torsion_free(dim, 1, rng)
            x = rng.uniform(-1, 1, size=dim)
            cov = covariant_jacobi_residual(pi, conn, x)
            jac = float(np.max(np.abs(jacobiator(pi, x))))
            assert abs(cov - jac) <= 1e-10

    def test_r4_fixture_large(self):
        resid = covariant_jacobi_residual(r4_nonpoisson(), ConnectionField.flat(4),
                                          np.array([1.0, 0.0, 0.0, 0.0]))
        assert resid >= 0.5


class TestLevelSetSubmanifold:
    def test_tangent_and_conormal(self):
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])   # x2 = 0
        x = np.array([5.0, 0.0])
        t = line.tangent_basis(x)
        np.testing.assert_allclose(np.abs(t[:, 0]), [1.0, 0.0], atol=1e-14)
        n = line.conormal_basis(x)
        np.testing.assert_allclose(np.abs(n[:, 0]), [0.0, 1.0], atol=1e-14)

    def test_membership_error(self):
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])
        with pytest.raises(PointNotOnSubmanifold):
            line.require_on(np.array([0.0, 0.5]))

    def test_rank_deficiency(self):
        # duplicated constraint: Jacobian rank 1 < 2
        dupe = LevelSetSubmanifold.from_constraints(
            2, [[(1.0, (0, 1))], [(2.0, (0, 1))]])
        with pytest.raises(RankDeficientJacobian):
            dupe.tangent_basis(np.array([1.0, 0.0]))


class TestIsCoisotropicAt:
    def test_zero_field_always(self):
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])
        ok, resid = is_coisotropic_at(BivectorField.zero(2), line, np.array([2.0, 0.0]))
        assert ok and resid == 0.0

    def test_lagrangian_line_in_r2(self):
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0))]})
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])
        ok, resid = is_coisotropic_at(pi, line, np.array([5.0, 0.0]))
        assert ok and resid <= 1e-15

    def test_origin_in_symplectic_r2_fails(self):
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0))]})
        origin = LevelSetSubmanifold.from_constraints(
            2, [[(1.0, (1, 0))], [(1.0, (0, 1))]])
        ok, resid = is_coisotropic_at(pi, origin, np.zeros(2))
        assert not ok and resid >= 0.5

    def test_invariant_under_constraint_rescaling(self):
        pi = so3_field()
        rng = np.random.default_rng(2)
        # sphere through (1,0,0): a Casimir level set, hence coisotropic
        sphere = [[(1.0, (2, 0, 0)), (1.0, (0, 2, 0)), (1.0, (0, 0, 2)), (-1.0, (0, 0, 0))]]
        x = np.array([1.0, 0.0, 0.0])
        for c in (1.0, -3.0, 1e4, 1e-4):
            scaled = LevelSetSubmanifold.from_constraints(
                3, [[(c * coeff, exps) for coeff, exps in sphere[0]]])
            ok, resid = is_coisotropic_at(pi, scaled, x)
            assert ok and resid <= 1e-12

    def test_not_on_submanifold_raises(self):
        pi = BivectorField.zero(2)
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])
        with pytest.raises(PointNotOnSubmanifold):
            is_coisotropic_at(pi, line, np.array([0.0, 1.0]))
