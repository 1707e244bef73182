"""Discretized phase space around a compatible pair and its coisotropy checks.

A tangent direction at a pair is (xi, e): xi at grid nodes, e on cells (as
du-coefficients, like eta). The canonical pairing between two directions is
the midpoint form

    Omega((xi, e), (xi~, e~)) = sum_c du * ( <e_c, xi~_mid,c> - <e~_c, xi_mid,c> ),

whose kernel is the m-dimensional alternating node mode on an interval (and
also admits alternating cell modes on an even loop grid); all subspace
verdicts run modulo this kernel.

The verdict calculus runs in the transport-straightened frame

    lam[n] = U[n] xi[n],        phi[c] = (U_mid,c^T)^{-1} e[c],

with U the parallel transport of the deformed connection and U_mid,c the
node average over cell c. Two exact discrete facts make this the right frame:

* the midpoint discretization of the linearized constraint is *exactly*
  equivalent to lam[c+1] = lam[c] - du * P_mid,c phi[c] with
  P_mid,c = U_mid,c S(X_mid,c) U_mid,c^T (a Cayley-form identity);
* for the fixtures shipped here, P is exactly constant along the pair
  whenever the field is Poisson, so the straightened system has constant
  coefficients and the continuum coisotropy statements hold to roundoff.

In raw (xi, e) coordinates the same midpoint pairing loses the first-class
property at grid order for nonconstant fields, which would drown the
theorems in discretization error; straightening is a linear change of frame,
so dimensions, kernels and verdict semantics are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import DEFAULT_TOLS
from .errors import (
    CoisoLabError,
    ConstraintViolated,
    DegenerateEndpointSystem,
    DimensionMismatch,
)
from .fields import BivectorField, ConnectionField, LevelSetSubmanifold, sharp_matrix
from .paths import (
    DiscretePair,
    TransportResult,
    cell_geometry,
    constraint_residual,
    transport,
)
from .symplin import FormSpace, LinSubspace, is_coisotropic, matrix_rank, nullspace, orthogonal


@dataclass(frozen=True)
class AmbientDiscretization:
    """The discrete phase space near a base pair, with pairing and frame data.

    Coordinates pack as (lam at nodes, phi on cells) in the straightened
    frame. Interval grids store N+1 nodes; loops store N with index N
    identified with 0. The pairing matrix is the plain midpoint form; the
    frame maps to and from raw (xi, e) components are exposed as twist and
    untwist.
    """

    pair: DiscretePair
    c0: LevelSetSubmanifold | None
    c1: LevelSetSubmanifold | None
    omega: FormSpace
    frame: TransportResult
    s_mid: np.ndarray        # (N, m, m) sharp matrices at cell midpoints

    @property
    def boundary_mode(self) -> str:
        if self.pair.periodic:
            return "periodic"
        if self.c0 is None and self.c1 is None:
            return "free-free"
        return "boundary"

    @property
    def n_nodes(self) -> int:
        return self.pair.n_cells if self.pair.periodic else self.pair.n_cells + 1

    @property
    def dim_ambient(self) -> int:
        return self.pair.m * (self.n_nodes + self.pair.n_cells)

    @property
    def kernel_dim(self) -> int:
        return self.omega.kernel_dim

    def pack(self, nodes: np.ndarray, cells: np.ndarray) -> np.ndarray:
        return np.concatenate([nodes[: self.n_nodes].ravel(), cells.ravel()])

    def unpack(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m, n = self.pair.m, self.pair.n_cells
        nodes = flat[: self.n_nodes * m].reshape(self.n_nodes, m)
        cells = flat[self.n_nodes * m:].reshape(n, m)
        return nodes, cells

    @cached_property
    def pushed_sharp_mid(self) -> np.ndarray:
        """P at cell midpoints: U_mid S(X_mid) U_mid^T, shape (N, m, m)."""
        n = self.pair.n_cells
        out = np.zeros((n, self.pair.m, self.pair.m))
        for c in range(n):
            u_mid = self.frame.u_mid(c)
            out[c] = u_mid @ self.s_mid[c] @ u_mid.T
        return out

    def twist_vector(self, xi: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Raw (xi, e) components to straightened flat coordinates."""
        n = self.pair.n_cells
        lam = np.zeros((self.n_nodes, self.pair.m))
        for node in range(self.n_nodes):
            lam[node] = self.frame.u[node] @ xi[node]
        phi = np.zeros((n, self.pair.m))
        for c in range(n):
            phi[c] = np.linalg.solve(self.frame.u_mid(c).T, e[c])
        return self.pack(lam, phi)

    def untwist_vector(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Straightened flat coordinates back to raw (xi, e) components."""
        lam, phi = self.unpack(flat)
        n = self.pair.n_cells
        xi = np.zeros_like(lam)
        for node in range(self.n_nodes):
            xi[node] = np.linalg.solve(self.frame.u[node], lam[node])
        e = np.zeros_like(phi)
        for c in range(n):
            e[c] = self.frame.u_mid(c).T @ phi[c]
        return xi, e

    def node_value(self, nodes: np.ndarray, node: int) -> np.ndarray:
        return nodes[node % self.n_nodes]


def build_ambient(
    pair: DiscretePair,
    pi: BivectorField,
    conn: ConnectionField,
    c0: LevelSetSubmanifold | None = None,
    c1: LevelSetSubmanifold | None = None,
    pre_tol: float = DEFAULT_TOLS.transport_pre,
) -> AmbientDiscretization:
    """Assemble the pairing matrix and the transport frame for the pair's grid."""
    if pair.periodic and (c0 is not None or c1 is not None):
        raise DimensionMismatch("periodic pairs take no boundary submanifolds")
    m, n = pair.m, pair.n_cells
    n_nodes = n if pair.periodic else n + 1
    dim = m * (n_nodes + n)
    du = pair.du
    omega = np.zeros((dim, dim))

    def node_idx(node: int, i: int) -> int:
        return (node % n_nodes) * m + i

    def cell_idx(cell: int, i: int) -> int:
        return n_nodes * m + cell * m + i

    half = 0.5 * du
    for c in range(n):
        for i in range(m):
            row = cell_idx(c, i)
            for node in (c, c + 1):
                col = node_idx(node, i)
                omega[row, col] += half
                omega[col, row] -= half
    frame = transport(pair, pi, conn, pre_tol)
    mids = pair.midpoints()
    s_mid = np.stack([sharp_matrix(pi, mids[c]) for c in range(n)])
    return AmbientDiscretization(pair, c0, c1, FormSpace(dim, omega), frame, s_mid)


@dataclass(frozen=True)
class TangentModel:
    """Basis of the discretized linearized-constraint solution set.

    The basis is held in straightened coordinates; every column also solves
    the raw midpoint linearization, which is what worst_linear_residual
    measures.
    """

    basis: LinSubspace
    boundary_mode: str
    worst_linear_residual: float
    endpoint_rank: int

    @property
    def dim(self) -> int:
        return self.basis.dim


def linearized_residual(
    ambient: AmbientDiscretization,
    pi: BivectorField,
    conn: ConnectionField,
    flat_vec: np.ndarray,
) -> float:
    """Max cell residual of the raw discrete linearized constraint.

    The input is a straightened vector; it is untwisted first, so this check
    exercises the frame maps together with the cell equations.
    """
    pair = ambient.pair
    geo = cell_geometry(pair, pi, conn)
    xi, e = ambient.untwist_vector(flat_vec)
    worst = 0.0
    for c in range(pair.n_cells):
        xi_a = ambient.node_value(xi, c)
        xi_b = ambient.node_value(xi, c + 1)
        xi_mid = 0.5 * (xi_a + xi_b)
        defect = xi_b - xi_a + geo.m_cell[c] @ xi_mid + pair.du * geo.s_mid[c] @ e[c]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def straightened_residual(ambient: AmbientDiscretization, flat_vec: np.ndarray) -> float:
    """Max cell residual of d lam + P_mid phi = 0 for a straightened vector.

    On a loop the closing cell uses lam(1) = U(1) xi(0), the monodromy image
    of the identified start node.
    """
    pair = ambient.pair
    lam, phi = ambient.unpack(flat_vec)
    du = pair.du
    worst = 0.0
    for c in range(pair.n_cells):
        if c + 1 < ambient.n_nodes or not pair.periodic:
            lam_next = lam[(c + 1) % ambient.n_nodes]
        else:
            lam_next = ambient.frame.u[pair.n_cells] @ lam[0]
        defect = lam_next - lam[c] + du * ambient.pushed_sharp_mid[c] @ phi[c]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def build_tangent(
    ambient: AmbientDiscretization,
    pi: BivectorField,
    conn: ConnectionField,
    rank_tol: float = DEFAULT_TOLS.rank,
    pre_tol: float = DEFAULT_TOLS.transport_pre,
) -> TangentModel:
    """Solve the discrete linearized constraint with the ambient's boundary data.

    Free parameters are the cell covectors phi and the admissible start
    values xi(0); nodes are propagated cell by cell in the straightened frame
    and the end condition (endpoint tangency, or closure for loops) is
    imposed by a rank-revealing nullspace step. A rank loss in the endpoint
    system against the generic count is reported as DegenerateEndpointSystem
    rather than silently projected.
    """
    pair = ambient.pair
    resid = constraint_residual(pair, pi)
    if resid > pre_tol:
        raise ConstraintViolated(f"base pair residual {resid:.3e} exceeds {pre_tol:.1e}")
    m, n, du = pair.m, pair.n_cells, pair.du
    p_mid = ambient.pushed_sharp_mid

    if ambient.c0 is None or pair.periodic:
        t0 = np.eye(m)
    else:
        t0 = ambient.c0.tangent_basis(pair.x[0], rank_tol)
    n_t0 = t0.shape[1]
    n_params = n_t0 + n * m

    # lam[0] = xi(0) since U[0] = Id; lam[c+1] = lam[c] - du * P_mid,c phi_c
    lam_maps = np.zeros((n + 1, m, n_params))
    lam_maps[0][:, :n_t0] = t0
    for c in range(n):
        lam_maps[c + 1] = lam_maps[c]
        cols = slice(n_t0 + c * m, n_t0 + (c + 1) * m)
        lam_maps[c + 1][:, cols] = lam_maps[c][:, cols] - du * p_mid[c]

    u_end = ambient.frame.u[n]
    if ambient.boundary_mode == "periodic":
        end_rows = np.linalg.solve(u_end, lam_maps[n]) - lam_maps[0]
        expected_rank = None
    elif ambient.c1 is None:
        end_rows = np.zeros((0, n_params))
        expected_rank = 0
    else:
        jac = ambient.c1.jacobian(pair.x[n])
        jac = jac / np.linalg.norm(jac, axis=1)[:, None]
        end_rows = jac @ np.linalg.solve(u_end, lam_maps[n])
        expected_rank = jac.shape[0]

    rank = matrix_rank(end_rows, rank_tol)
    if expected_rank is not None and rank < min(expected_rank, n_params):
        raise DegenerateEndpointSystem(
            f"endpoint system rank {rank} below the generic {expected_rank}")
    params = nullspace(end_rows, rank_tol)

    n_nodes = ambient.n_nodes
    rows = np.zeros((ambient.dim_ambient, params.shape[1]))
    for node in range(n_nodes):
        rows[node * m:(node + 1) * m] = lam_maps[node] @ params
    rows[n_nodes * m:] = params[n_t0:]

    basis = LinSubspace.from_spanning(rows, rank_tol)
    worst = 0.0
    for j in range(basis.dim):
        worst = max(worst, linearized_residual(ambient, pi, conn, basis.basis[:, j]))
    if worst > 1e-10:
        raise CoisoLabError(f"tangent basis has linearized residual {worst:.3e}")
    return TangentModel(basis, ambient.boundary_mode, worst, rank)


def brute_force_tangent(
    ambient: AmbientDiscretization,
    pi: BivectorField,
    conn: ConnectionField,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> LinSubspace:
    """Independent oracle: raw-coordinate nullspace of the full linear system,
    twisted into the straightened frame column by column."""
    pair = ambient.pair
    m, n, du = pair.m, pair.n_cells, pair.du
    geo = cell_geometry(pair, pi, conn)
    n_nodes = ambient.n_nodes
    dim = ambient.dim_ambient
    rows = []
    for c in range(n):
        block = np.zeros((m, dim))
        a_node, b_node = c % n_nodes, (c + 1) % n_nodes
        eye = np.eye(m)
        block[:, a_node * m:(a_node + 1) * m] += -eye + 0.5 * geo.m_cell[c]
        block[:, b_node * m:(b_node + 1) * m] += eye + 0.5 * geo.m_cell[c]
        block[:, n_nodes * m + c * m: n_nodes * m + (c + 1) * m] = du * geo.s_mid[c]
        rows.append(block)
    if not pair.periodic:
        if ambient.c0 is not None:
            jac = ambient.c0.jacobian(pair.x[0])
            block = np.zeros((jac.shape[0], dim))
            block[:, :m] = jac
            rows.append(block)
        if ambient.c1 is not None:
            jac = ambient.c1.jacobian(pair.x[n])
            block = np.zeros((jac.shape[0], dim))
            block[:, n * m:(n + 1) * m] = jac
            rows.append(block)
    raw = nullspace(np.vstack(rows), rank_tol)
    cols = []
    for j in range(raw.shape[1]):
        xi = raw[: n_nodes * m, j].reshape(n_nodes, m)
        e = raw[n_nodes * m:, j].reshape(n, m)
        cols.append(ambient.twist_vector(xi, e))
    return LinSubspace.from_spanning(np.column_stack(cols), rank_tol)


def twist(
    ambient: AmbientDiscretization,
    xi: np.ndarray,
    e: np.ndarray,
    transported: TransportResult | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Straightened components of a raw tangent direction.

    lam[node] = U xi, phi[cell] = (U_mid^T)^{-1} e. The transport defaults to
    the ambient's own frame.
    """
    frame = transported if transported is not None else ambient.frame
    n_nodes = ambient.n_nodes
    lam = np.zeros((n_nodes, ambient.pair.m))
    for node in range(n_nodes):
        lam[node] = frame.u[node] @ xi[node]
    phi = np.zeros((ambient.pair.n_cells, ambient.pair.m))
    for c in range(ambient.pair.n_cells):
        phi[c] = np.linalg.solve(frame.u_mid(c).T, e[c])
    return lam, phi


def twisted_residual(
    ambient: AmbientDiscretization,
    xi: np.ndarray,
    e: np.ndarray,
    transported: TransportResult | None = None,
) -> float:
    """Residual of d lam + P_mid phi = 0 for the twist of a raw direction."""
    lam, phi = twist(ambient, xi, e, transported)
    return straightened_residual(ambient, ambient.pack(lam, phi))


def orthogonal_space(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> LinSubspace:
    """Symplectic orthogonal of the tangent model inside the discrete pairing."""
    return orthogonal(ambient.omega, tangent.basis, rank_tol)


@dataclass(frozen=True)
class Verdict:
    coisotropic: bool
    defect: int
    worst_residual: float
    kernel_dim: int
    tangent_dim: int
    orthogonal_dim: int


def coisotropy_verdict(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> Verdict:
    """Kernel-relative coisotropy of the tangent model in the discrete pairing."""
    check = is_coisotropic(ambient.omega, tangent.basis, tol, rank_tol)
    return Verdict(
        coisotropic=check.coisotropic,
        defect=check.defect,
        worst_residual=check.worst_residual,
        kernel_dim=check.kernel_dim,
        tangent_dim=tangent.dim,
        orthogonal_dim=check.orthogonal_dim,
    )


def gauge_span(
    ambient: AmbientDiscretization,
    pi: BivectorField,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> LinSubspace:
    """Span of the discretized gauge directions (sharp(X) beta, -D beta).

    The nodal covector beta is carried through the frame as b[n] with
    beta[n] = U[n]^T b[n], which turns the gauge pair into

        lam~[n] = P_n b[n],     phi~[c] = -(b[c+1] - b[c]) / du,

    the straightened image of (sharp(X) beta, -D beta) with the covariant
    difference evaluated through the transport frame. P_n is the pushed
    tensor averaged over the cells touching node n: the cell values are what
    the straightened tangent recursion uses, so pinning the generator to
    them keeps the span exactly inside the orthogonal when the pushed tensor
    is constant. Boundary data: b(0) in N*C_0 and U(1)^T b(1) in N*C_1
    (nothing admissible on a free end, all of R^m on a loop, where the end
    nodes are identified through the monodromy).
    """
    pair = ambient.pair
    m, n, du = pair.m, pair.n_cells, pair.du
    p_mid = ambient.pushed_sharp_mid
    p_node = np.zeros((ambient.n_nodes, m, m))
    for node in range(ambient.n_nodes):
        if pair.periodic:
            p_node[node] = 0.5 * (p_mid[(node - 1) % n] + p_mid[node % n])
        elif node == 0:
            p_node[node] = p_mid[0]
        elif node == n:
            p_node[node] = p_mid[n - 1]
        else:
            p_node[node] = 0.5 * (p_mid[node - 1] + p_mid[node])

    def b_dofs():
        if pair.periodic:
            # b[0] = U(1)^T b(1) closes the loop; free nodes are 1..N
            u_end_t = ambient.frame.u[n].T
            for node in range(1, n + 1):
                for i in range(m):
                    b = np.zeros((n + 1, m))
                    b[node, i] = 1.0
                    if node == n:
                        b[0] = u_end_t @ b[n]
                    yield b
            return
        if ambient.c0 is not None:
            for k in range(ambient.c0.codim):
                b = np.zeros((n + 1, m))
                b[0] = ambient.c0.conormal_basis(pair.x[0], rank_tol)[:, k]
                yield b
        for node in range(1, n):
            for i in range(m):
                b = np.zeros((n + 1, m))
                b[node, i] = 1.0
                yield b
        if ambient.c1 is not None:
            # U(1)^T b(1) in N*C_1
            dirs = np.linalg.solve(ambient.frame.u[n].T,
                                   ambient.c1.conormal_basis(pair.x[n], rank_tol))
            for k in range(dirs.shape[1]):
                b = np.zeros((n + 1, m))
                b[n] = dirs[:, k]
                yield b

    columns = []
    for b in b_dofs():
        lam = np.zeros((ambient.n_nodes, m))
        for node in range(ambient.n_nodes):
            lam[node] = p_node[node] @ b[node]
        phi = -(b[1:] - b[:-1]) / du
        columns.append(ambient.pack(lam, phi))
    if not columns:
        return LinSubspace.zero(ambient.dim_ambient)
    return LinSubspace.from_spanning(np.column_stack(columns), rank_tol)


@dataclass(frozen=True)
class CharacteristicMatch:
    defect: float
    gauge_dim: int
    orthogonal_dim: int
    gauge_off_orthogonal: float
    orthogonal_off_gauge: float


def characteristic_match(
    ambient: AmbientDiscretization,
    tangent: TangentModel,
    pi: BivectorField,
    conn: ConnectionField,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> CharacteristicMatch:
    """Two-sided, kernel-relative defect between gauge span and symplectic orthogonal."""
    gauge = gauge_span(ambient, pi, rank_tol)
    ortho = orthogonal_space(ambient, tangent, rank_tol)
    ker = ambient.omega.kernel
    off_orth = ortho.union(ker, rank_tol=rank_tol).residual_off(gauge.basis)
    off_gauge = gauge.union(ker, rank_tol=rank_tol).residual_off(ortho.basis)
    return CharacteristicMatch(
        defect=max(off_orth, off_gauge),
        gauge_dim=gauge.dim,
        orthogonal_dim=ortho.dim,
        gauge_off_orthogonal=off_orth,
        orthogonal_off_gauge=off_gauge,
    )


def explicit_zero_pi_orthogonal(
    ambient: AmbientDiscretization,
    rank_tol: float = DEFAULT_TOLS.rank,
) -> LinSubspace:
    """Closed-form orthogonal space for a vanishing bivector field.

    With sharp = 0 the orthogonal directions are exactly (0, -d beta) for
    nodal beta with end values in the conormal spaces (zero on free ends),
    up to the pairing kernel; used as an independent oracle.
    """
    pair = ambient.pair
    if pair.periodic:
        raise DimensionMismatch("closed form stated for interval grids")
    m, n, du = pair.m, pair.n_cells, pair.du
    cols = []

    def column_from_beta(beta: np.ndarray) -> np.ndarray:
        e = -(beta[1:] - beta[:-1]) / du
        return ambient.pack(np.zeros((n + 1, m)), e)

    if ambient.c0 is not None:
        dirs = ambient.c0.conormal_basis(pair.x[0], rank_tol)
        for k in range(dirs.shape[1]):
            beta = np.zeros((n + 1, m))
            beta[0] = dirs[:, k]
            cols.append(column_from_beta(beta))
    for node in range(1, n):
        for i in range(m):
            beta = np.zeros((n + 1, m))
            beta[node, i] = 1.0
            cols.append(column_from_beta(beta))
    if ambient.c1 is not None:
        dirs = ambient.c1.conormal_basis(pair.x[n], rank_tol)
        for k in range(dirs.shape[1]):
            beta = np.zeros((n + 1, m))
            beta[n] = dirs[:, k]
            cols.append(column_from_beta(beta))
    kernel = ambient.omega.kernel
    stack = np.column_stack(cols) if cols else np.zeros((ambient.dim_ambient, 0))
    return LinSubspace.from_spanning(np.hstack([stack, kernel.basis]), rank_tol)
