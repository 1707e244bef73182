"""Exact polynomial tensor fields on R^m and the pointwise bivector calculus.

All fields are multivariate polynomials with coefficient-level derivatives, so
evaluation and differentiation introduce no truncation error: downstream
tolerances test geometric statements, not a numerical differentiator.

Index conventions (fixed once, used everywhere):

* a bivector field stores components ``pi[i][j] = pi^{ij}(x)`` with
  ``pi^{ij} = -pi^{ji}``;
* the sharp map sends a covector ``s`` to the vector with components
  ``(sharp s)^k = pi^{jk}(x) s_j``, i.e. ``sharp_matrix(pi, x) = pi(x)^T``,
  which matches the compatibility equation ``dX^i + eta_j pi^{ji}(X) = 0``;
* Christoffel data is stored as ``christoffel[i][j][k] = Gamma^i_{jk}`` with
  the torsion-free symmetry ``Gamma^i_{jk} = Gamma^i_{kj}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULT_TOLS
from .errors import DimensionMismatch, PointNotOnSubmanifold, RankDeficientJacobian

Term = tuple[float, tuple[int, ...]]


def _normalize_terms(dim: int, terms: Iterable[tuple[float, Sequence[int]]]) -> tuple[Term, ...]:
    acc: dict[tuple[int, ...], float] = {}
    for coeff, exps in terms:
        e = tuple(int(k) for k in exps)
        if len(e) != dim:
            raise DimensionMismatch(f"term exponents {e} do not match dimension {dim}")
        if any(k < 0 for k in e):
            raise ValueError(f"negative exponent in term {e}")
        acc[e] = acc.get(e, 0.0) + float(coeff)
    items = sorted((e, c) for e, c in acc.items() if c != 0.0)
    return tuple((c, e) for e, c in items)


@dataclass(frozen=True)
class PolyScalarField:
    """A scalar polynomial on R^m stored as merged (coefficient, exponents) terms."""

    dim: int
    terms: tuple[Term, ...]

    @classmethod
    def from_terms(cls, dim: int, terms: Iterable[tuple[float, Sequence[int]]]) -> "PolyScalarField":
        return cls(dim, _normalize_terms(dim, terms))

    @classmethod
    def zero(cls, dim: int) -> "PolyScalarField":
        return cls(dim, ())

    @classmethod
    def constant(cls, dim: int, value: float) -> "PolyScalarField":
        return cls.from_terms(dim, [(value, (0,) * dim)])

    @classmethod
    def coordinate(cls, dim: int, i: int) -> "PolyScalarField":
        exps = [0] * dim
        exps[i] = 1
        return cls.from_terms(dim, [(1.0, exps)])

    @cached_property
    def _coeffs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    @cached_property
    def _exps(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, self.dim), dtype=int)
        return np.array([e for _, e in self.terms], dtype=int)

    def __call__(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"point of dimension {x.shape[-1]}, field on R^{self.dim}")
        if not self.terms:
            return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
        powers = np.prod(np.power(x[..., None, :], self._exps), axis=-1)
        out = powers @ self._coeffs
        return out if x.ndim > 1 else float(out)

    def partial(self, i: int) -> "PolyScalarField":
        """Exact partial derivative with respect to coordinate ``i``."""
        out = []
        for coeff, exps in self.terms:
            if exps[i] == 0:
                continue
            new = list(exps)
            new[i] -= 1
            out.append((coeff * exps[i], tuple(new)))
        return PolyScalarField.from_terms(self.dim, out)

    def gradient(self) -> tuple["PolyScalarField", ...]:
        return tuple(self.partial(i) for i in range(self.dim))

    def scale(self, c: float) -> "PolyScalarField":
        return PolyScalarField.from_terms(self.dim, [(c * coeff, e) for coeff, e in self.terms])

    def __add__(self, other: "PolyScalarField") -> "PolyScalarField":
        if other.dim != self.dim:
            raise DimensionMismatch("adding fields on different spaces")
        return PolyScalarField.from_terms(self.dim, list(self.terms) + list(other.terms))

    def __neg__(self) -> "PolyScalarField":
        return self.scale(-1.0)

    def __sub__(self, other: "PolyScalarField") -> "PolyScalarField":
        return self + (-other)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)


def _as_field(dim: int, data) -> PolyScalarField:
    if isinstance(data, PolyScalarField):
        if data.dim != dim:
            raise DimensionMismatch("component field has wrong dimension")
        return data
    return PolyScalarField.from_terms(dim, data)


@dataclass(frozen=True)
class BivectorField:
    """An m x m grid of polynomial components with pi^{ij} = -pi^{ji} exactly."""

    dim: int
    comps: tuple[tuple[PolyScalarField, ...], ...]

    def __post_init__(self):
        m = self.dim
        if len(self.comps) != m or any(len(row) != m for row in self.comps):
            raise DimensionMismatch("component grid must be m x m")
        for i in range(m):
            if not self.comps[i][i].is_zero:
                raise ValueError(f"diagonal component ({i},{i}) must vanish identically")
            for j in range(i + 1, m):
                if self.comps[j][i] != self.comps[i][j].scale(-1.0):
                    raise ValueError(f"components ({i},{j}) and ({j},{i}) are not opposite")

    @classmethod
    def from_upper(cls, dim: int, entries: Mapping[tuple[int, int], object]) -> "BivectorField":
        """Build from strictly upper-triangular data; the rest is filled by skewness."""
        grid = [[PolyScalarField.zero(dim) for _ in range(dim)] for _ in range(dim)]
        for (i, j), data in entries.items():
            if not 0 <= i < j < dim:
                raise ValueError(f"entry ({i},{j}) is not strictly upper triangular")
            f = _as_field(dim, data)
            grid[i][j] = f
            grid[j][i] = f.scale(-1.0)
        return cls(dim, tuple(tuple(row) for row in grid))

    @classmethod
    def zero(cls, dim: int) -> "BivectorField":
        return cls.from_upper(dim, {})

    @property
    def is_zero(self) -> bool:
        return all(f.is_zero for row in self.comps for f in row)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the component matrix pi^{ij}(x); exactly skew by construction."""
        m = self.dim
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                v = self.comps[i][j](x)
                out[i, j] = v
                out[j, i] = -v
        return out

    @cached_property
    def _partials(self) -> tuple[tuple[tuple[PolyScalarField, ...], ...], ...]:
        # _partials[s][i][j] = d/dx^s of pi^{ij}, stored upper-triangular only
        m = self.dim
        return tuple(
            tuple(
                tuple(self.comps[i][j].partial(s) if i < j else PolyScalarField.zero(m)
                      for j in range(m))
                for i in range(m)
            )
            for s in range(m)
        )

    def derivative_tensor(self, x: np.ndarray) -> np.ndarray:
        """D[s, i, j] = d_s pi^{ij}(x), skew in (i, j) exactly."""
        m = self.dim
        out = np.zeros((m, m, m))
        for s in range(m):
            for i in range(m):
                for j in range(i + 1, m):
                    v = self._partials[s][i][j](x)
                    out[s, i, j] = v
                    out[s, j, i] = -v
        return out

    @property
    def max_degree(self) -> int:
        return max((f.degree for row in self.comps for f in row), default=0)


@dataclass(frozen=True)
class ConnectionField:
    """Torsion-free polynomial Christoffel symbols Gamma^i_{jk} = Gamma^i_{kj}."""

    dim: int
    christoffel: tuple[tuple[tuple[PolyScalarField, ...], ...], ...]

    def __post_init__(self):
        m = self.dim
        for i in range(m):
            for j in range(m):
                for k in range(j + 1, m):
                    if self.christoffel[i][j][k] != self.christoffel[i][k][j]:
                        raise ValueError(f"torsion: Gamma^{i}_{{{j}{k}}} != Gamma^{i}_{{{k}{j}}}")

    @classmethod
    def flat(cls, dim: int) -> "ConnectionField":
        z = PolyScalarField.zero(dim)
        grid = tuple(tuple(tuple(z for _ in range(dim)) for _ in range(dim)) for _ in range(dim))
        return cls(dim, grid)

    @classmethod
    def from_entries(cls, dim: int, entries: Mapping[tuple[int, int, int], object]) -> "ConnectionField":
        """Build from Gamma^i_{jk} data; (j, k) is symmetrized automatically."""
        grid = [[[PolyScalarField.zero(dim) for _ in range(dim)] for _ in range(dim)] for _ in range(dim)]
        for (i, j, k), data in entries.items():
            f = _as_field(dim, data)
            grid[i][j][k] = f
            grid[i][k][j] = f
        return cls(dim, tuple(tuple(tuple(row) for row in plane) for plane in grid))

    @property
    def is_flat(self) -> bool:
        return all(f.is_zero for plane in self.christoffel for row in plane for f in row)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """G[i, j, k] = Gamma^i_{jk}(x)."""
        m = self.dim
        out = np.zeros((m, m, m))
        for i in range(m):
            for j in range(m):
                for k in range(j, m):
                    v = self.christoffel[i][j][k](x)
                    out[i, j, k] = v
                    out[i, k, j] = v
        return out


@dataclass(frozen=True)
class LevelSetSubmanifold:
    """A submanifold C = {F_1 = ... = F_k = 0} of R^m with Jacobian access.

    The tangent space at x is ker dF(x) and the conormal space is the row
    span of dF(x); both are only trusted where the Jacobian has full rank.
    """

    ambient_dim: int
    constraints: tuple[PolyScalarField, ...]

    def __post_init__(self):
        if not self.constraints:
            raise ValueError("need at least one constraint; use None for the full space")
        if len(self.constraints) > self.ambient_dim:
            raise DimensionMismatch("more constraints than ambient dimensions")
        for f in self.constraints:
            if f.dim != self.ambient_dim:
                raise DimensionMismatch("constraint dimension mismatch")

    @classmethod
    def from_constraints(cls, ambient_dim: int, constraints: Iterable[object]) -> "LevelSetSubmanifold":
        return cls(ambient_dim, tuple(_as_field(ambient_dim, c) for c in constraints))

    @property
    def codim(self) -> int:
        return len(self.constraints)

    @cached_property
    def _grads(self) -> tuple[tuple[PolyScalarField, ...], ...]:
        return tuple(f.gradient() for f in self.constraints)

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([f(x) for f in self.constraints])

    def contains(self, x: np.ndarray, tol: float = DEFAULT_TOLS.membership) -> bool:
        return bool(np.max(np.abs(self.values(x))) <= tol)

    def require_on(self, x: np.ndarray, tol: float = DEFAULT_TOLS.membership) -> None:
        worst = float(np.max(np.abs(self.values(x))))
        if worst > tol:
            raise PointNotOnSubmanifold(f"|F(x)| = {worst:.3e} exceeds {tol:.1e} at x = {x}")

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        k, m = self.codim, self.ambient_dim
        out = np.zeros((k, m))
        for a in range(k):
            for i in range(m):
                out[a, i] = self._grads[a][i](x)
        return out

    def _full_rank_jacobian(self, x: np.ndarray, rank_tol: float) -> np.ndarray:
        jac = self.jacobian(x)
        svals = np.linalg.svd(jac, compute_uv=False)
        if svals.size == 0 or svals[-1] <= rank_tol * max(svals[0], 1.0):
            raise RankDeficientJacobian(f"constraint Jacobian rank-deficient at x = {x}")
        return jac

    def tangent_basis(self, x: np.ndarray, rank_tol: float = DEFAULT_TOLS.rank) -> np.ndarray:
        """Orthonormal basis of T_x C = ker dF(x), shape (m, m - k)."""
        jac = self._full_rank_jacobian(x, rank_tol)
        _, _, vt = np.linalg.svd(jac)
        return vt[self.codim:].T.copy()

    def conormal_basis(self, x: np.ndarray, rank_tol: float = DEFAULT_TOLS.rank) -> np.ndarray:
        """Orthonormal basis of the row span of dF(x), shape (m, k)."""
        jac = self._full_rank_jacobian(x, rank_tol)
        _, _, vt = np.linalg.svd(jac)
        return vt[:self.codim].T.copy()


# ---------------------------------------------------------------------------
# pointwise operations
# ---------------------------------------------------------------------------

def sharp_matrix(pi: BivectorField, x: np.ndarray) -> np.ndarray:
    """Matrix S of the sharp map at x: S[k, j] = pi^{jk}(x), so sharp(s) = S @ s."""
    x = np.asarray(x, dtype=float)
    if x.shape != (pi.dim,):
        raise DimensionMismatch(f"point shape {x.shape}, expected ({pi.dim},)")
    return pi.matrix(x).T


def jacobiator(pi: BivectorField, x: np.ndarray) -> np.ndarray:
    """Cyclic obstruction J^{ijk}(x) = pi^{is} d_s pi^{jk} + cyclic; zero iff Poisson.

    Only the i < j < k components are computed; the rest are filled by total
    antisymmetry, which therefore holds exactly.
    """
    m = pi.dim
    p = pi.matrix(x)
    d = pi.derivative_tensor(x)
    out = np.zeros((m, m, m))
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                v = p[i] @ d[:, j, k] + p[j] @ d[:, k, i] + p[k] @ d[:, i, j]
                for (a, b, c), sign in (
                    ((i, j, k), 1.0), ((j, k, i), 1.0), ((k, i, j), 1.0),
                    ((j, i, k), -1.0), ((i, k, j), -1.0), ((k, j, i), -1.0),
                ):
                    out[a, b, c] = sign * v
    return out


def covariant_derivative_pi(pi: BivectorField, conn: ConnectionField, x: np.ndarray) -> np.ndarray:
    """nabla[i, j, k] = d_k pi^{ij} + Gamma^i_{kr} pi^{rj} + Gamma^j_{kr} pi^{ir}."""
    if conn.dim != pi.dim:
        raise DimensionMismatch("connection and bivector dimensions differ")
    p = pi.matrix(x)
    d = pi.derivative_tensor(x)
    nabla = np.transpose(d, (1, 2, 0)).copy()          # d_k pi^{ij} -> [i, j, k]
    if not conn.is_flat:
        g = conn.evaluate(x)                           # g[i, k, r] = Gamma^i_{kr}
        nabla += np.einsum("ikr,rj->ijk", g, p)
        nabla += np.einsum("jkr,ir->ijk", g, p)
    return nabla


def covariant_jacobi_residual(pi: BivectorField, conn: ConnectionField, x: np.ndarray) -> float:
    """Max-norm of pi^{sr} nabla^{lk}_r + pi^{kr} nabla^{sl}_r + pi^{lr} nabla^{ks}_r.

    For any torsion-free connection this cyclic sum equals the jacobiator, so
    its vanishing is an equivalent Poisson test.
    """
    p = pi.matrix(x)
    nabla = covariant_derivative_pi(pi, conn, x)
    cyc = (np.einsum("sr,lkr->slk", p, nabla)
           + np.einsum("kr,slr->slk", p, nabla)
           + np.einsum("lr,ksr->slk", p, nabla))
    return float(np.max(np.abs(cyc)))


def is_coisotropic_at(
    pi: BivectorField,
    submanifold: LevelSetSubmanifold,
    x: np.ndarray,
    tol: float = DEFAULT_TOLS.coisotropy,
    membership_tol: float = DEFAULT_TOLS.membership,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> tuple[bool, float]:
    """Test sharp(N*_x C) in T_x C with a row-normalized Jacobian.

    Returns (verdict, residual) where the residual is the worst violation of
    ``dF(x) . sharp(row)`` over unit-normalized rows of dF(x); normalizing
    rows makes the verdict invariant under rescaling each constraint.
    """
    x = np.asarray(x, dtype=float)
    submanifold.require_on(x, membership_tol)
    jac = submanifold._full_rank_jacobian(x, rank_tol)
    norms = np.linalg.norm(jac, axis=1)
    jac_n = jac / norms[:, None]
    s = sharp_matrix(pi, x)
    pushed = jac_n @ s.T                               # row a: sharp(row_a) as a vector
    violations = np.abs(pushed @ jac_n.T)              # component along each conormal row
    residual = float(np.max(violations)) if violations.size else 0.0
    scale = max(1.0, float(np.max(np.abs(pushed))) if pushed.size else 0.0)
    return residual <= tol * scale, residual
