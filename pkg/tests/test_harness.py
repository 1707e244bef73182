from __future__ import annotations

import numpy as np
import pytest

from conftest import coisotropic_names, interval_poisson_names, scenario_pair
from coisolab.errors import ConstraintViolated, DegenerateEndpointSystem
from coisolab.fields import BivectorField, ConnectionField, LevelSetSubmanifold
from coisolab.harness import (
    brute_force_tangent,
    build_ambient,
    build_tangent,
    characteristic_match,
    coisotropy_verdict,
    explicit_zero_pi_orthogonal,
    gauge_span,
    linearized_residual,
    orthogonal_space,
    straightened_residual,
)
from coisolab.paths import DiscretePair, solve_compatible
from coisolab.scenario import get_scenario
from coisolab.symplin import is_coisotropic, subspace_equal


def ambient_and_tangent(name: str, n: int, free: bool = False):
    scn, pair = scenario_pair(name, n)
    c0, c1 = (None, None) if free else (scn.c0, scn.c1)
    ambient = build_ambient(pair, scn.pi, scn.connection, c0, c1)
    tangent = build_tangent(ambient, scn.pi, scn.connection)
    return scn, ambient, tangent


class TestAmbient:
    def test_interval_kernel_is_alternating(self):
        scn, pair = scenario_pair("symplectic-r2", 8)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        assert ambient.kernel_dim == 2
        # the alternating node mode with zero cell part pairs to nothing
        alt = np.zeros(ambient.dim_ambient)
        for node in range(9):
            alt[2 * node] = (-1.0) ** node
        assert np.max(np.abs(ambient.omega.form @ alt)) == 0.0

    def test_periodic_kernel_dim(self):
        scn, pair = scenario_pair("circle-so3", 8)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        assert ambient.kernel_dim == 2 * 3

    def test_kernel_carries_no_verdict_content(self):
        # adjoining the kernel to the tangent leaves the verdict unchanged
        scn, ambient, tangent = ambient_and_tangent("symplectic-r2", 8)
        enlarged = tangent.basis.union(ambient.omega.kernel)
        check = is_coisotropic(ambient.omega, enlarged)
        verdict = coisotropy_verdict(ambient, tangent)
        assert check.coisotropic == verdict.coisotropic
        assert check.defect == verdict.defect

    def test_pack_unpack_roundtrip(self):
        scn, pair = scenario_pair("so3-lie-poisson", 4)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        rng = np.random.default_rng(0)
        nodes = rng.standard_normal((ambient.n_nodes, 3))
        cells = rng.standard_normal((4, 3))
        back_n, back_c = ambient.unpack(ambient.pack(nodes, cells))
        np.testing.assert_array_equal(back_n, nodes)
        np.testing.assert_array_equal(back_c, cells)

    def test_twist_untwist_roundtrip(self):
        scn, pair = scenario_pair("so3-lie-poisson", 8)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        rng = np.random.default_rng(1)
        xi = rng.standard_normal((ambient.n_nodes, 3))
        e = rng.standard_normal((8, 3))
        xi2, e2 = ambient.untwist_vector(ambient.twist_vector(xi, e))
        np.testing.assert_allclose(xi2, xi, atol=1e-13)
        np.testing.assert_allclose(e2, e, atol=1e-13)


class TestBuildTangent:
    def test_zero_pi_intersecting_lines_dimension(self):
        # xi is constant, pinned to T0 ∩ T1 = {0}: dim = mN = 2N
        scn, ambient, tangent = ambient_and_tangent("zero-pi-intersecting-lines", 4)
        assert tangent.dim == 8

    def test_free_free_dimension(self):
        scn, ambient, tangent = ambient_and_tangent("so3-lie-poisson", 8)
        assert tangent.dim == 3 * 8 + 3

    def test_boundary_dimension(self):
        # generic count mN + dim T0 - codim T1 = 2N + 1 - 1
        scn, ambient, tangent = ambient_and_tangent("symplectic-r2", 4)
        assert tangent.dim == 8
        assert tangent.endpoint_rank == 1

    @pytest.mark.parametrize("name,n", [
        ("zero-pi-intersecting-lines", 4),
        ("symplectic-r2", 4),
        ("so3-lie-poisson", 4),
        ("nonpoisson-r4", 4),
        ("circle-so3", 8),
        ("circle-nonpoisson-r4", 8),
    ])
    def test_matches_brute_force_oracle(self, name, n):
        scn, pair = scenario_pair(name, n)
        ambient = build_ambient(pair, scn.pi, scn.connection, scn.c0, scn.c1)
        tangent = build_tangent(ambient, scn.pi, scn.connection)
        oracle = brute_force_tangent(ambient, scn.pi, scn.connection)
        equal, resid = subspace_equal(tangent.basis, oracle)
        assert equal and resid <= 1e-9

    def test_periodic_dimension_from_monodromy_oracle(self):
        # tuned circle: monodromy is the identity, the cell closure map has
        # rank 2, so dim = m + mN - 2 = 3N + 1 (the oracle owns this count)
        scn, pair = scenario_pair("circle-so3", 8)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        tangent = build_tangent(ambient, scn.pi, scn.connection)
        monodromy = ambient.frame.u[8]
        np.testing.assert_allclose(monodromy, np.eye(3), atol=1e-12)
        assert tangent.dim == 3 * 8 + 1
        assert tangent.dim == brute_force_tangent(ambient, scn.pi, scn.connection).dim

    def test_linear_residual_invariant(self):
        for name in ("symplectic-r2", "so3-lie-poisson", "circle-so3"):
            scn, pair = scenario_pair(name, 8)
            ambient = build_ambient(pair, scn.pi, scn.connection, scn.c0, scn.c1)
            tangent = build_tangent(ambient, scn.pi, scn.connection)
            assert tangent.worst_linear_residual <= 1e-10

    def test_degenerate_endpoint_system_reported(self):
        # pi = 0 with C0 = C1: xi is constant and already tangent to C1, so the
        # endpoint rows vanish identically and the generic count fails
        zero = BivectorField.zero(2)
        line = LevelSetSubmanifold.from_constraints(2, [[(1.0, (0, 1))]])
        pair = solve_compatible(zero, np.array([0.5, 0.0]), np.zeros((4, 2)))
        ambient = build_ambient(pair, zero, ConnectionField.flat(2), line, line)
        with pytest.raises(DegenerateEndpointSystem):
            build_tangent(ambient, zero, ConnectionField.flat(2))

    def test_rejects_incompatible_base_pair(self):
        pi = get_scenario("so3-lie-poisson").pi
        bad = DiscretePair(3, 4, np.random.default_rng(0).uniform(-1, 1, (5, 3)),
                           np.zeros((4, 3)))
        with pytest.raises(ConstraintViolated):
            build_ambient(bad, pi, ConnectionField.flat(3))


class TestTwist:
    def test_identity_frame_for_constant_field(self):
        scn, pair = scenario_pair("symplectic-r2", 8)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        rng = np.random.default_rng(2)
        xi = rng.standard_normal((9, 2))
        e = rng.standard_normal((8, 2))
        flat = ambient.twist_vector(xi, e)
        lam, phi = ambient.unpack(flat)
        np.testing.assert_array_equal(lam, xi)
        np.testing.assert_array_equal(phi, e)

    def test_tangent_solves_straightened_equation(self):
        for name in ("so3-lie-poisson", "circle-so3"):
            scn, pair = scenario_pair(name, 16)
            ambient = build_ambient(pair, scn.pi, scn.connection)
            tangent = build_tangent(ambient, scn.pi, scn.connection)
            worst = max(straightened_residual(ambient, tangent.basis.basis[:, j])
                        for j in range(tangent.dim))
            assert worst <= 1e-9

    def test_raw_nodes_not_straight_but_twist_is(self):
        # a tangent direction with zero cell part has constant lam but
        # genuinely varying raw xi along a curved pair
        scn, pair = scenario_pair("so3-lie-poisson", 16)
        ambient = build_ambient(pair, scn.pi, scn.connection)
        tangent = build_tangent(ambient, scn.pi, scn.connection)
        picked = None
        for j in range(tangent.dim):
            lam, phi = ambient.unpack(tangent.basis.basis[:, j])
            if np.max(np.abs(phi)) <= 1e-12:
                picked = tangent.basis.basis[:, j]
                break
        assert picked is not None
        xi, _ = ambient.untwist_vector(picked)
        raw_variation = np.max(np.abs(xi[1:] - xi[:-1]))
        assert raw_variation >= 1e-3
        assert straightened_residual(ambient, picked) <= 1e-12


class TestOrthogonalSpace:
    def test_poisson_inclusion_in_tangent(self):
        for name in interval_poisson_names():
            scn, ambient, tangent = ambient_and_tangent(name, 8, free=True)
            ortho = orthogonal_space(ambient, tangent)
            target = tangent.basis.union(ambient.omega.kernel)
            assert target.residual_off(ortho.basis) <= 1e-8

    def test_nonpoisson_violating_direction(self):
        scn, ambient, tangent = ambient_and_tangent("nonpoisson-r4", 8)
        ortho = orthogonal_space(ambient, tangent)
        target = tangent.basis.union(ambient.omega.kernel)
        resid = target.project_off(ortho.basis)
        norms = np.linalg.norm(resid, axis=0)
        worst = int(np.argmax(norms))
        assert norms[worst] >= 0.04
        assert linearized_residual(ambient, scn.pi, scn.connection,
                                   ortho.basis[:, worst]) >= 0.05

    def test_zero_pi_explicit_form(self):
        for name in ("zero-pi-r2", "zero-pi-intersecting-lines"):
            scn, ambient, tangent = ambient_and_tangent(name, 8)
            explicit = explicit_zero_pi_orthogonal(ambient)
            ortho = orthogonal_space(ambient, tangent)
            equal, resid = subspace_equal(explicit, ortho)
            assert equal and resid <= 1e-10


class TestVerdicts:
    @pytest.mark.parametrize("name", interval_poisson_names())
    def test_poisson_fixtures_true(self, name):
        for n in (4, 8, 16):
            scn, ambient, tangent = ambient_and_tangent(name, n)
            verdict = coisotropy_verdict(ambient, tangent)
            assert verdict.coisotropic
            assert verdict.worst_residual <= 1e-8

    def test_nonpoisson_false_with_growing_defect(self):
        defects = []
        for n in (4, 8, 16):
            scn, ambient, tangent = ambient_and_tangent("nonpoisson-r4", n)
            verdict = coisotropy_verdict(ambient, tangent)
            assert not verdict.coisotropic and verdict.defect >= 1
            assert verdict.worst_residual >= 0.02
            defects.append(verdict.defect)
        assert defects[-1] >= defects[0]

    def test_non_coisotropic_boundary_false(self):
        scn, ambient, tangent = ambient_and_tangent("symplectic-r4-point", 8)
        verdict = coisotropy_verdict(ambient, tangent)
        assert not verdict.coisotropic and verdict.defect >= 1

    def test_circle_dichotomy(self):
        scn, ambient, tangent = ambient_and_tangent("circle-so3", 16)
        assert coisotropy_verdict(ambient, tangent).coisotropic
        scn2, ambient2, tangent2 = ambient_and_tangent("circle-nonpoisson-r4", 16)
        verdict = coisotropy_verdict(ambient2, tangent2)
        assert not verdict.coisotropic and verdict.defect >= 1

    def test_nonlinear_poisson_is_discretization_limited(self):
        # nonconstant Poisson structures close only at O(h^2): the residual
        # refines to zero (unlike the genuinely non-Poisson fixture)
        pi = BivectorField.from_upper(2, {(0, 1): [(1.0, (0, 0)), (0.5, (2, 0))]})
        conn = ConnectionField.flat(2)
        worsts = []
        for n in (4, 8, 16):
            mids = (np.arange(n) + 0.5) / n
            eta = np.stack([np.cos(mids), np.sin(2 * mids)], axis=1)
            pair = solve_compatible(pi, np.array([0.3, -0.2]), eta)
            ambient = build_ambient(pair, pi, conn)
            tangent = build_tangent(ambient, pi, conn)
            worsts.append(coisotropy_verdict(ambient, tangent).worst_residual)
        orders = np.log2(np.array(worsts[:-1]) / np.array(worsts[1:]))
        assert np.all(orders >= 1.9)


class TestCharacteristicMatch:
    @pytest.mark.parametrize("name", coisotropic_names())
    def test_gauge_span_equals_orthogonal(self, name):
        scn, ambient, tangent = ambient_and_tangent(name, 8)
        match = characteristic_match(ambient, tangent, scn.pi, scn.connection)
        assert match.defect <= 1e-12

    def test_gauge_span_inside_tangent_for_poisson(self):
        scn, ambient, tangent = ambient_and_tangent("so3-lie-poisson", 8)
        span = gauge_span(ambient, scn.pi)
        target = tangent.basis.union(ambient.omega.kernel)
        assert target.residual_off(span.basis) <= 1e-10

    def test_mismatch_on_nonpoisson(self):
        scn, ambient, tangent = ambient_and_tangent("nonpoisson-r4", 8)
        match = characteristic_match(ambient, tangent, scn.pi, scn.connection)
        assert match.defect >= 0.01
