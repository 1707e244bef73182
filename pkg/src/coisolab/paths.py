"""Discrete compatible pairs and the flows along them.

A pair is a path X at N+1 grid nodes together with a covector density eta on
N cells. The stored cell value is the coefficient vector of ``eta_j du``;
every cell-level integral therefore carries the width ``du = 1/N``. The
compatibility constraint, its solver, parallel transport of the deformed
connection, the induced skew tensor P, gauge steps and the momentum pairing
all use the implicit midpoint rule: symmetric, second order, and exact on the
quadratic invariants these checks lean on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DEFAULT_TOLS
from .errors import (
    ClosureFailure,
    ConstraintViolated,
    DimensionMismatch,
    NonConvergence,
)
from .fields import (
    BivectorField,
    ConnectionField,
    LevelSetSubmanifold,
    PolyScalarField,
    sharp_matrix,
)


@dataclass(frozen=True)
class DiscretePair:
    """Grid path X ((N+1) x m) and cell covector coefficients eta (N x m)."""

    m: int
    n_cells: int
    x: np.ndarray
    eta: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("need at least two cells")
        if self.x.shape != (self.n_cells + 1, self.m):
            raise DimensionMismatch(f"X must be ({self.n_cells + 1}, {self.m})")
        if self.eta.shape != (self.n_cells, self.m):
            raise DimensionMismatch(f"eta must be ({self.n_cells}, {self.m})")

    @property
    def du(self) -> float:
        return 1.0 / self.n_cells

    @property
    def closure_gap(self) -> float:
        return float(np.max(np.abs(self.x[-1] - self.x[0])))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.x[:-1] + self.x[1:])


@dataclass(frozen=True)
class TransportResult:
    """Per-node transport U, per-cell generator A, per-node pushed tensor P.

    U solves the midpoint discretization of dU = U (A + Gamma dX) with
    U[0] = Id; P[n] = U[n] sharp(pi, X[n]) U[n]^T, so P[0] is exactly the
    sharp matrix at the start point.
    """

    u: np.ndarray            # (N+1, m, m)
    a: np.ndarray            # (N, m, m), evaluated at cell midpoints
    p: np.ndarray            # (N+1, m, m)
    max_condition: float

    def u_mid(self, c: int) -> np.ndarray:
        return 0.5 * (self.u[c] + self.u[c + 1])


@dataclass(frozen=True)
class GaugeParameter:
    """Nodal covector data for a gauge step, with endpoint memberships enforced.

    Endpoint values are projected onto the conormal space of the respective
    boundary submanifold; the size of what the projection removed is kept as
    a per-endpoint residual. Periodic parameters identify the two end nodes.
    """

    beta: np.ndarray                      # (N+1, m)
    periodic: bool
    projection_residuals: tuple[float, float]


def make_gauge_parameter(
    beta: np.ndarray,
    pair: DiscretePair,
    c0: LevelSetSubmanifold | None = None,
    c1: LevelSetSubmanifold | None = None,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> GaugeParameter:
    """Project raw nodal beta onto the admissible boundary covectors.

    With a boundary submanifold present the end value must lie in its conormal
    space; with none (free end) any covector is admissible. For periodic pairs
    the last node is identified with the first.
    """
    beta = np.array(beta, dtype=float)
    if beta.shape != (pair.n_cells + 1, pair.m):
        raise DimensionMismatch(f"beta must be ({pair.n_cells + 1}, {pair.m})")
    residuals = [0.0, 0.0]
    if pair.periodic:
        beta[-1] = beta[0]
        return GaugeParameter(beta, True, (0.0, 0.0))
    for which, sub in ((0, c0), (-1, c1)):
        if sub is None:
            continue
        conormal = sub.conormal_basis(pair.x[which], rank_tol)
        projected = conormal @ (conormal.T @ beta[which])
        residuals[which] = float(np.linalg.norm(beta[which] - projected))
        beta[which] = projected
    return GaugeParameter(beta, False, (residuals[0], residuals[-1]))


@dataclass(frozen=True)
class CellGeometry:
    """Midpoint data shared by the transport, tangent and gauge computations."""

    x_mid: np.ndarray        # (N, m)
    dx: np.ndarray           # (N, m)
    s_mid: np.ndarray        # (N, m, m) sharp matrix at midpoints
    nabla_mid: np.ndarray    # (N, m, m, m) covariant derivative at midpoints
    gamma_mid: np.ndarray | None   # (N, m, m, m) Christoffel at midpoints, None if flat
    m_cell: np.ndarray       # (N, m, m) du*A + Gamma-part, the midpoint generator


def cell_geometry(pair: DiscretePair, pi: BivectorField, conn: ConnectionField) -> CellGeometry:
    from .fields import covariant_derivative_pi  # local import keeps module load cheap

    n, m, du = pair.n_cells, pair.m, pair.du
    x_mid = pair.midpoints()
    dx = pair.x[1:] - pair.x[:-1]
    s_mid = np.zeros((n, m, m))
    nabla_mid = np.zeros((n, m, m, m))
    gamma_mid = None if conn.is_flat else np.zeros((n, m, m, m))
    m_cell = np.zeros((n, m, m))
    for c in range(n):
        s_mid[c] = sharp_matrix(pi, x_mid[c])
        nabla_mid[c] = covariant_derivative_pi(pi, conn, x_mid[c])
        # A^i_k = eta_j (nabla pi)^{ji}_k at the midpoint
        a_cell = np.einsum("j,jik->ik", pair.eta[c], nabla_mid[c])
        m_cell[c] = du * a_cell
        if gamma_mid is not None:
            gamma_mid[c] = conn.evaluate(x_mid[c])
            m_cell[c] += np.einsum("irs,r->is", gamma_mid[c], dx[c])
    return CellGeometry(x_mid, dx, s_mid, nabla_mid, gamma_mid, m_cell)


def constraint_residual(pair: DiscretePair, pi: BivectorField) -> float:
    """Max over cells of |X[c+1] - X[c] + du * sharp(X_mid) eta[c]| (sup norm)."""
    du = pair.du
    worst = 0.0
    for c in range(pair.n_cells):
        x_mid = 0.5 * (pair.x[c] + pair.x[c + 1])
        defect = pair.x[c + 1] - pair.x[c] + du * sharp_matrix(pi, x_mid) @ pair.eta[c]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def solve_compatible(
    pi: BivectorField,
    x0: np.ndarray,
    eta: np.ndarray,
    periodic: bool = False,
    fp_tol: float = DEFAULT_TOLS.solve_fixed_point,
    closure_tol: float = DEFAULT_TOLS.closure,
    max_iterations: int = 200,
) -> DiscretePair:
    """Integrate dX + sharp(X) eta = 0 node-to-node with the implicit midpoint step.

    Each step solves X[c+1] = X[c] - du * sharp((X[c]+X[c+1])/2) eta[c] by
    fixed-point iteration. Periodic solves additionally demand closure within
    ``closure_tol`` and then pin X[N] to X[0] exactly.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    m = pi.dim
    if x0.shape != (m,) or eta.shape[1] != m:
        raise DimensionMismatch("start point or eta has the wrong dimension")
    n = eta.shape[0]
    du = 1.0 / n
    x = np.zeros((n + 1, m))
    x[0] = x0
    with np.errstate(over="raise", invalid="raise"):
        for c in range(n):
            y = x[c] - du * (sharp_matrix(pi, x[c]) @ eta[c])   # explicit predictor
            for _ in range(max_iterations):
                try:
                    y_new = x[c] - du * (sharp_matrix(pi, 0.5 * (x[c] + y)) @ eta[c])
                except FloatingPointError as exc:
                    raise NonConvergence(f"cell {c}: midpoint fixed point diverged") from exc
                delta = float(np.max(np.abs(y_new - y)))
                y = y_new
                if delta <= fp_tol:
                    break
            else:
                raise NonConvergence(
                    f"cell {c}: midpoint fixed point stalled at delta {delta:.3e}")
            x[c + 1] = y
    if periodic:
        gap = float(np.max(np.abs(x[-1] - x[0])))
        if gap > closure_tol:
            raise ClosureFailure(f"|X[N] - X[0]| = {gap:.3e} exceeds {closure_tol:.1e}")
        x[-1] = x[0]
    return DiscretePair(m, n, x, np.array(eta), periodic)


def transport(
    pair: DiscretePair,
    pi: BivectorField,
    conn: ConnectionField,
    pre_tol: float = DEFAULT_TOLS.transport_pre,
) -> TransportResult:
    """Parallel transport of the deformed connection along a compatible pair.

    The cell update is the Cayley form of the implicit midpoint rule for
    dU = U (A + Gamma dX), which is exact for this linear matrix equation:
    U[c+1] = U[c] (I + M_c/2)(I - M_c/2)^{-1} with M_c the midpoint generator.
    """
    resid = constraint_residual(pair, pi)
    if resid > pre_tol:
        raise ConstraintViolated(f"constraint residual {resid:.3e} exceeds {pre_tol:.1e}")
    geo = cell_geometry(pair, pi, conn)
    n, m, du = pair.n_cells, pair.m, pair.du
    eye = np.eye(m)
    u = np.zeros((n + 1, m, m))
    u[0] = eye
    for c in range(n):
        half = 0.5 * geo.m_cell[c]
        step = np.linalg.solve((eye - half).T, (eye + half).T).T
        u[c + 1] = u[c] @ step
    p = np.zeros((n + 1, m, m))
    for node in range(n + 1):
        p[node] = u[node] @ sharp_matrix(pi, pair.x[node]) @ u[node].T
    a = geo.m_cell / du if conn.is_flat else np.einsum(
        "cj,cjik->cik", pair.eta, geo.nabla_mid)
    max_cond = float(max(np.linalg.cond(u[node]) for node in range(n + 1)))
    return TransportResult(u, a, p, max_cond)


def p_drift(
    pair: DiscretePair,
    pi: BivectorField,
    conn: ConnectionField,
    pre_tol: float = DEFAULT_TOLS.transport_pre,
) -> float:
    """Constancy-plus-skewness drift of the pushed tensor along the pair.

    Near zero (second order in the grid) exactly when the bivector field is
    Poisson on the region the pair explores; bounded away from zero otherwise.
    """
    result = transport(pair, pi, conn, pre_tol)
    drift = float(np.max(np.abs(result.p - result.p[0])))
    skew = float(np.max(np.abs(result.p + np.transpose(result.p, (0, 2, 1)))))
    return drift + skew


def jacobi_defect_tensor(pair: DiscretePair, pi: BivectorField, conn: ConnectionField) -> float:
    """Diagnostic only: max over cells of the contracted cyclic defect driving dP.

    T^{ls} = eta_k (pi^{rs} nabla^{kl}_r - pi^{kr} nabla^{ls}_r + pi^{lr} nabla^{ks}_r),
    evaluated at cell midpoints. The pass/fail signal for the converse
    detector is the measured drift, not this tensor.
    """
    geo = cell_geometry(pair, pi, conn)
    worst = 0.0
    for c in range(pair.n_cells):
        p_mat = geo.s_mid[c].T          # pi^{ij} at the midpoint
        nab = geo.nabla_mid[c]
        t = (np.einsum("k,rs,klr->ls", pair.eta[c], p_mat, nab)
             - np.einsum("k,kr,lsr->ls", pair.eta[c], p_mat, nab)
             + np.einsum("k,lr,ksr->ls", pair.eta[c], p_mat, nab))
        worst = max(worst, float(np.max(np.abs(t))))
    return worst


def gauge_step(
    pair: DiscretePair,
    pi: BivectorField,
    conn: ConnectionField,
    gauge: GaugeParameter,
    eps: float,
) -> DiscretePair:
    """One explicit Euler step of the gauge flow generated by nodal beta.

    Nodes move by eps * sharp(X) beta; cell coefficients pick up the discrete
    covariant differential of beta:

        eta'[c] = eta[c] + eps * ( -(beta[c+1]-beta[c])/du
                                   + Gamma^k_{ri}(X_mid) (dX^r/du) beta_mid_k
                                   + nabla^{jk}_i(X_mid) eta_j beta_mid_k ).

    For a compatible pair this changes the constraint residual only at second
    order in eps (plus the grid's own second-order floor).
    """
    if gauge.beta.shape != (pair.n_cells + 1, pair.m):
        raise DimensionMismatch("gauge parameter does not match the pair's grid")
    geo = cell_geometry(pair, pi, conn)
    du = pair.du
    x_new = pair.x.copy()
    for node in range(pair.n_cells + 1):
        x_new[node] += eps * (sharp_matrix(pi, pair.x[node]) @ gauge.beta[node])
    eta_new = pair.eta.copy()
    for c in range(pair.n_cells):
        beta_mid = 0.5 * (gauge.beta[c] + gauge.beta[c + 1])
        tilde_e = -(gauge.beta[c + 1] - gauge.beta[c]) / du
        tilde_e = tilde_e + np.einsum("jki,j,k->i", geo.nabla_mid[c], pair.eta[c], beta_mid)
        if geo.gamma_mid is not None:
            tilde_e = tilde_e + np.einsum("kri,r,k->i", geo.gamma_mid[c], geo.dx[c], beta_mid) / du
        eta_new[c] += eps * tilde_e
    return DiscretePair(pair.m, pair.n_cells, x_new, eta_new, pair.periodic)


@dataclass(frozen=True)
class TimeDependentOneForm:
    """A covector-valued polynomial field attached to every grid node."""

    node_forms: tuple[tuple[PolyScalarField, ...], ...]

    @classmethod
    def constant(cls, components: Sequence[PolyScalarField], n_cells: int) -> "TimeDependentOneForm":
        return cls(tuple(tuple(components) for _ in range(n_cells + 1)))

    @classmethod
    def affine(cls, start: Sequence[PolyScalarField], end: Sequence[PolyScalarField],
               n_cells: int) -> "TimeDependentOneForm":
        """Linear-in-u blend from the start form to the end form."""
        nodes = []
        for node in range(n_cells + 1):
            u = node / n_cells
            nodes.append(tuple(s.scale(1.0 - u) + e.scale(u) for s, e in zip(start, end)))
        return cls(tuple(nodes))

    @property
    def n_cells(self) -> int:
        return len(self.node_forms) - 1

    def at(self, node: int, x: np.ndarray) -> np.ndarray:
        return np.array([f(x) for f in self.node_forms[node]])

    def boundary_residual(
        self,
        c0: LevelSetSubmanifold | None,
        c1: LevelSetSubmanifold | None,
        sample_points: Sequence[np.ndarray] | None = None,
        rank_tol: float = DEFAULT_TOLS.rank,
    ) -> float:
        """Worst pullback of the end forms to the boundary submanifolds.

        The pullback of a one-form to C vanishes at x iff the form annihilates
        T_x C; tested at the provided sample points (they must lie on the
        respective submanifold).
        """
        worst = 0.0
        for node, sub in ((0, c0), (-1, c1)):
            if sub is None or sample_points is None:
                continue
            for x in sample_points:
                if not sub.contains(x):
                    continue
                tangent = sub.tangent_basis(x, rank_tol)
                alpha = self.at(node, x)
                if tangent.size:
                    worst = max(worst, float(np.max(np.abs(alpha @ tangent))))
        return worst


def momentum(pair: DiscretePair, pi: BivectorField, one_form: TimeDependentOneForm) -> float:
    """Midpoint quadrature of the pairing of the form with the constraint.

    Vanishes to quadrature order on compatible pairs; exactly linear in the
    form. The pair need not be compatible.
    """
    if one_form.n_cells != pair.n_cells:
        raise DimensionMismatch("one-form grid does not match the pair")
    du = pair.du
    total = 0.0
    for c in range(pair.n_cells):
        x_mid = 0.5 * (pair.x[c] + pair.x[c + 1])
        b_mid = 0.5 * (one_form.at(c, x_mid) + one_form.at(c + 1, x_mid))
        defect = pair.x[c + 1] - pair.x[c] + du * sharp_matrix(pi, x_mid) @ pair.eta[c]
        total += float(b_mid @ defect)
    return total
