"""Endpoint maps on the tangent model and the dual-pair orthogonality checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLS
from .errors import NotCoisotropic, PreconditionFailed
from .fields import BivectorField, jacobiator, sharp_matrix
from .harness import (
    AmbientDiscretization,
    TangentModel,
    Verdict,
    coisotropy_verdict,
    orthogonal_space,
)
from .symplin import LinSubspace, QuotientForm, nullspace, orthogonal, quotient_form


@dataclass(frozen=True)
class EndpointDifferentials:
    """Endpoint evaluation of tangent directions: columns are xi(0) and xi(1)."""

    varpi0: np.ndarray      # (m, dim_tangent)
    varpi1: np.ndarray


def endpoint_differentials(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
) -> EndpointDifferentials:
    if ambient.pair.periodic:
        raise PreconditionFailed("endpoint maps are an interval construction")
    m = ambient.pair.m
    n = ambient.pair.n_cells
    basis = tangent.basis.basis
    varpi0 = basis[:m, :].copy()                      # lam(0) = xi(0)
    varpi1 = np.linalg.solve(ambient.frame.u[n], basis[n * m:(n + 1) * m, :])
    return EndpointDifferentials(varpi0, varpi1)


def _characteristic_directions(
    ambient: AmbientDiscretization,
    pi: BivectorField,
    which: int,
    rank_tol: float,
) -> LinSubspace:
    """sharp(N*C_i) at the relevant endpoint; the zero space on a free end."""
    m = ambient.pair.m
    sub = ambient.c0 if which == 0 else ambient.c1
    if sub is None:
        return LinSubspace.zero(m)
    x = ambient.pair.x[0] if which == 0 else ambient.pair.x[-1]
    conormal = sub.conormal_basis(x, rank_tol)
    return LinSubspace.from_spanning(sharp_matrix(pi, x) @ conormal, rank_tol)


@dataclass(frozen=True)
class DualPairReport:
    orthogonality_residual: float       # max |Omega(K0, K1)|
    two_sided_equal: bool
    two_sided_residual: float
    endpoint_gauge_residual: float      # characteristic directions land in sharp(N*C_i)
    k0_dim: int
    k1_dim: int
    verdict: Verdict


def dual_pair_check(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
    pi: BivectorField,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> DualPairReport:
    """Mutual symplectic orthogonality of the endpoint-map kernels.

    K_i is the preimage, inside the tangent model, of the characteristic
    directions sharp(N*C_i) under the endpoint evaluation; the report checks
    Omega(K_0, K_1) = 0 and the two-sided identification

        orthogonal(K_0) ∩ tangent = K_1 + orthogonal(tangent)   (mod kernel),

    the discrete form of the endpoint-map kernels being each other's
    symplectic orthogonal in the reduced space.
    """
    pair = ambient.pair
    for x in (pair.x[0], pair.x[-1]):
        if float(np.max(np.abs(jacobiator(pi, x)))) > 1e-8:
            raise PreconditionFailed("bivector field is not Poisson at an endpoint")
    verdict = coisotropy_verdict(ambient, tangent, tol, rank_tol)
    if not verdict.coisotropic:
        raise PreconditionFailed("tangent model is not coisotropic")

    ends = endpoint_differentials(ambient, tangent)
    kernels: list[LinSubspace] = []
    for which, varpi in ((0, ends.varpi0), (1, ends.varpi1)):
        z_perp = _characteristic_directions(ambient, pi, which, rank_tol)
        rows = varpi - z_perp.basis @ (z_perp.basis.T @ varpi) if z_perp.dim else varpi
        coords = nullspace(rows, rank_tol)
        kernels.append(LinSubspace.from_spanning(tangent.basis.basis @ coords, rank_tol))
    k0, k1 = kernels

    if k0.dim and k1.dim:
        pairing = k0.basis.T @ ambient.omega.form @ k1.basis
        orthogonality = float(np.max(np.abs(pairing)))
    else:
        orthogonality = 0.0

    t_perp = orthogonal_space(ambient, tangent, rank_tol)
    lhs = orthogonal(ambient.omega, k0, rank_tol).intersection(tangent.basis, rank_tol)
    rhs = k1.union(t_perp, rank_tol=rank_tol)
    ker = ambient.omega.kernel
    lhs_mod = lhs.union(ker, rank_tol=rank_tol)
    rhs_mod = rhs.union(ker, rank_tol=rank_tol)
    resid = max(rhs_mod.residual_off(lhs.basis), lhs_mod.residual_off(rhs.basis))
    equal = resid <= tol

    # characteristic directions (tangent ∩ orthogonal) move endpoints inside
    # sharp(N*C_i): the gauge flow shifts X(i) along the foliation of C_i
    radical = tangent.basis.intersection(t_perp, rank_tol)
    gauge_resid = 0.0
    if radical.dim:
        m, n = pair.m, pair.n_cells
        xi0 = radical.basis[:m, :]
        xi1 = np.linalg.solve(ambient.frame.u[n], radical.basis[n * m:(n + 1) * m, :])
        for which, vals in ((0, xi0), (1, xi1)):
            z_perp = _characteristic_directions(ambient, pi, which, rank_tol)
            off = vals - z_perp.basis @ (z_perp.basis.T @ vals) if z_perp.dim else vals
            if off.size:
                gauge_resid = max(gauge_resid, float(np.max(np.abs(off))))

    return DualPairReport(
        orthogonality_residual=orthogonality,
        two_sided_equal=equal,
        two_sided_residual=resid,
        endpoint_gauge_residual=gauge_resid,
        k0_dim=k0.dim,
        k1_dim=k1.dim,
        verdict=verdict,
    )


@dataclass(frozen=True)
class ReduceResult:
    reduced: QuotientForm
    dim: int
    radical_dim: int


def reduce(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> ReduceResult:
    """Reduced phase space of the tangent model: quotient by its radical."""
    verdict = coisotropy_verdict(ambient, tangent, tol, rank_tol)
    if not verdict.coisotropic:
        raise NotCoisotropic(f"defect {verdict.defect}")
    q = quotient_form(ambient.omega, tangent.basis, tol, rank_tol)
    return ReduceResult(q, q.dim, q.radical_dim)
