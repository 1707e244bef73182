from __future__ import annotations

import numpy as np
import pytest

from coisolab.errors import NotCoisotropic, PreconditionFailed
from coisolab.symplin import (
    FormSpace,
    LinSubspace,
    annihilator_lemma_check,
    is_coisotropic,
    orthogonal,
    quotient_form,
    random_isotropic,
    reduction_in_stages_check,
    standard_symplectic,
    subspace_equal,
)


def span(*cols) -> LinSubspace:
    return LinSubspace.from_spanning(np.array(cols, dtype=float).T)


def random_skew(n: int, rank: int, rng: np.random.Generator) -> FormSpace:
    base = standard_symplectic(rank // 2).form
    form = np.zeros((n, n))
    form[:rank, :rank] = base
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    rotated = q @ form @ q.T
    return FormSpace(n, 0.5 * (rotated - rotated.T))


class TestLinSubspace:
    def test_orthonormalization_drops_dependent_columns(self):
        mat = np.array([[1.0, 2.0, 1.0], [0.0, 0.0, 1.0]]).T   # third = combo? shape guard
        sub = LinSubspace.from_spanning(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))
        assert sub.dim == 1

    def test_intersection_and_union(self):
        a = span([1, 0, 0], [0, 1, 0])
        b = span([0, 1, 0], [0, 0, 1])
        inter = a.intersection(b)
        assert inter.dim == 1
        assert inter.residual_off(np.array([[0.0, 1.0, 0.0]]).T) <= 1e-12
        assert a.union(b).dim == 3

    def test_zero_matrix_spans_nothing(self):
        assert LinSubspace.from_spanning(1e-16 * np.ones((4, 3))).dim == 0


class TestOrthogonal:
    def test_full_space_nondegenerate(self):
        space = standard_symplectic(2)
        assert orthogonal(space, LinSubspace.full(4)).dim == 0

    def test_lagrangian_line_in_r2(self):
        space = FormSpace(2, np.array([[0.0, 1.0], [-1.0, 0.0]]))
        ortho = orthogonal(space, span([1, 0]))
        assert ortho.dim == 1
        assert ortho.residual_off(np.array([[1.0, 0.0]]).T) <= 1e-12

    def test_random_dims_and_double_orthogonal(self):
        rng = np.random.default_rng(0)
        space = random_skew(8, 8, rng)
        for _ in range(200):
            w = LinSubspace.from_spanning(rng.standard_normal((8, 3)))
            ortho = orthogonal(space, w)
            assert ortho.dim == 5
            double = orthogonal(space, ortho)
            equal, resid = subspace_equal(double, w)
            assert equal and resid <= 1e-9

    def test_degenerate_dimension_bookkeeping(self):
        # dim W + dim orth(W) = n + dim(W ∩ ker)
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(4, 9))
            rank = 2 * int(rng.integers(1, n // 2 + 1))
            space = random_skew(n, rank, rng)
            k = int(rng.integers(1, n))
            w = LinSubspace.from_spanning(rng.standard_normal((n, k)))
            ortho = orthogonal(space, w)
            overlap = w.intersection(space.kernel)
            assert w.dim + ortho.dim == n + overlap.dim


class TestIsCoisotropic:
    def test_full_space(self):
        space = standard_symplectic(2)
        check = is_coisotropic(space, LinSubspace.full(4))
        assert check.coisotropic and check.defect == 0

    def test_three_space_in_r4(self):
        space = standard_symplectic(2)
        check = is_coisotropic(space, span([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]))
        assert check.coisotropic and check.worst_residual <= 1e-12

    def test_isotropic_line_fails(self):
        space = standard_symplectic(2)
        check = is_coisotropic(space, span([1, 0, 0, 0]))
        # orthogonal is span{e1,e3,e4}; e1 lies inside, two directions violate
        assert not check.coisotropic
        assert check.defect == 2
        assert check.worst_residual >= 0.9


class TestAnnihilatorLemma:
    def test_zero_map(self):
        ok, resid = annihilator_lemma_check(np.zeros((3, 4)), span([1, 0, 0]))
        assert ok and resid <= 1e-12

    def test_identity_map(self):
        ok, _ = annihilator_lemma_check(np.eye(3), span([1, 0, 0]))
        assert ok

    def test_random_mixed_rank(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            p, q = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            rank = int(rng.integers(0, min(p, q) + 1))
            f = (rng.standard_normal((p, rank)) @ rng.standard_normal((rank, q))
                 if rank else np.zeros((p, q)))
            t_dim = int(rng.integers(0, p + 1))
            t = (LinSubspace.from_spanning(rng.standard_normal((p, t_dim)))
                 if t_dim else LinSubspace.zero(p))
            ok, _ = annihilator_lemma_check(f, t)
            assert ok


class TestQuotientForm:
    def test_full_space_nondegenerate_is_identity_quotient(self):
        space = standard_symplectic(2)
        q = quotient_form(space, LinSubspace.full(4))
        assert q.dim == 4 and q.radical_dim == 0
        sv = np.linalg.svd(q.space.form, compute_uv=False)
        assert sv[-1] > 0.5

    def test_coisotropic_three_space(self):
        space = standard_symplectic(2)
        q = quotient_form(space, span([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]))
        assert q.dim == 2 and q.radical_dim == 1
        sv = np.linalg.svd(q.space.form, compute_uv=False)
        assert sv[-1] > 1e-10

    def test_degenerate_form_full_subspace(self):
        form = np.zeros((4, 4))
        form[0, 1], form[1, 0] = 1.0, -1.0
        space = FormSpace(4, form)
        q = quotient_form(space, LinSubspace.full(4))
        assert q.dim == 2 and q.radical_dim == 2

    def test_raises_for_isotropic(self):
        with pytest.raises(NotCoisotropic):
            quotient_form(standard_symplectic(2), span([1, 0, 0, 0]))

    def test_quotient_always_nondegenerate(self):
        rng = np.random.default_rng(9)
        space = standard_symplectic(4)
        for _ in range(25):
            iso = random_isotropic(space, int(rng.integers(1, 4)), rng)
            sub = orthogonal(space, iso)   # coisotropic by construction
            q = quotient_form(space, sub)
            if q.dim:
                sv = np.linalg.svd(q.space.form, compute_uv=False)
                assert sv[-1] > 1e-10


class TestReductionInStages:
    def test_whole_space(self):
        space = standard_symplectic(2)
        report = reduction_in_stages_check(space, LinSubspace.full(4), LinSubspace.full(4))
        assert report.passed and report.reduced_dim == 4

    def test_random_chains(self):
        rng = np.random.default_rng(3)
        space = standard_symplectic(4)
        for _ in range(30):
            iso = random_isotropic(space, int(rng.integers(1, 4)), rng)
            small = orthogonal(space, iso)
            extra = int(rng.integers(0, 8 - small.dim + 1))
            big = small if extra == 0 else LinSubspace.from_spanning(
                np.hstack([small.basis, rng.standard_normal((8, extra))]))
            report = reduction_in_stages_check(space, big, small)
            assert report.passed
            assert report.reduced_dim == report.double_reduced_dim

    def test_lagrangian_extension_reduces_to_zero(self):
        # small = big^perp + Lagrangian of big/big^perp: the double reduction is trivial
        space = standard_symplectic(2)
        big = span([1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0])    # coisotropic, perp = e1
        small = span([1, 0, 0, 0], [0, 0, 1, 0])                # e1 + a Lagrangian line
        report = reduction_in_stages_check(space, big, small)
        assert report.passed
        assert report.reduced_dim == 0 and report.double_reduced_dim == 0

    def test_preconditions(self):
        space = standard_symplectic(2)
        with pytest.raises(PreconditionFailed):
            reduction_in_stages_check(space, span([1, 0, 0, 0]), span([0, 1, 0, 0]))
        with pytest.raises(PreconditionFailed):
            reduction_in_stages_check(space, LinSubspace.full(4), span([1, 0, 0, 0]))


def test_form_space_rejects_non_skew():
    with pytest.raises(ValueError):
        FormSpace(2, np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_random_isotropic_is_isotropic():
    rng = np.random.default_rng(8)
    space = standard_symplectic(3)
    iso = random_isotropic(space, 3, rng)
    assert iso.dim == 3
    pairing = iso.basis.T @ space.form @ iso.basis
    assert np.max(np.abs(pairing)) <= 1e-12
