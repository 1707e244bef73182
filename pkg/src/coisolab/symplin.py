"""Linear algebra of (possibly degenerate) skew bilinear forms.

Subspaces are held as orthonormal basis matrices. Every inclusion or equality
of subspaces is tested modulo the kernel of the form: the discrete pairing on
path spaces has a small alternating-mode kernel that is absent in the
continuum, and quotienting it out keeps the continuum statements testable
without spurious failures.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import DEFAULT_TOLS
from .errors import DimensionMismatch, NotCoisotropic, PreconditionFailed

RANK_TOL = DEFAULT_TOLS.rank


# The rank cut is relative to the largest singular value but floored at unit
# scale: bases here are orthonormal, so any singular value far below one is
# noise even when the whole matrix is numerically zero.

def orthonormal_columns(mat: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span of ``mat``."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[1] == 0:
        return mat.reshape(mat.shape[0], 0)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0:
        return np.zeros((mat.shape[0], 0))
    r = int(np.sum(s > rank_tol * max(s[0], 1.0)))
    return u[:, :r].copy()


def nullspace(mat: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ker(mat), shape (cols, dim_null)."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    n = mat.shape[1]
    if mat.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(mat)
    r = int(np.sum(s > rank_tol * max(s[0], 1.0))) if s.size else 0
    return vt[r:].T.copy()


def matrix_rank(mat: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if min(mat.shape) == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > rank_tol * max(s[0], 1.0)))


@dataclass(frozen=True)
class LinSubspace:
    """A subspace of R^n held as an n x r matrix with orthonormal columns."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        if self.basis.shape[0] != self.ambient_dim:
            raise DimensionMismatch("basis rows must equal the ambient dimension")

    @classmethod
    def from_spanning(cls, mat: np.ndarray, rank_tol: float = RANK_TOL) -> "LinSubspace":
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(mat.shape[0], orthonormal_columns(mat, rank_tol))

    @classmethod
    def zero(cls, n: int) -> "LinSubspace":
        return cls(n, np.zeros((n, 0)))

    @classmethod
    def full(cls, n: int) -> "LinSubspace":
        return cls(n, np.eye(n))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project_off(self, mat: np.ndarray) -> np.ndarray:
        """Component of each column of ``mat`` orthogonal to this subspace."""
        if self.dim == 0:
            return np.array(mat, dtype=float, copy=True)
        return mat - self.basis @ (self.basis.T @ mat)

    def residual_off(self, mat: np.ndarray) -> float:
        """Largest Euclidean norm of a column of ``mat`` after projecting it out."""
        if mat.size == 0:
            return 0.0
        r = self.project_off(mat)
        return float(np.max(np.linalg.norm(r, axis=0)))

    def union(self, *others: "LinSubspace", rank_tol: float = RANK_TOL) -> "LinSubspace":
        mats = [self.basis] + [o.basis for o in others]
        return LinSubspace.from_spanning(np.hstack(mats), rank_tol)

    def intersection(self, other: "LinSubspace", rank_tol: float = RANK_TOL) -> "LinSubspace":
        """Intersection via the kernel of [A | -B]."""
        a, b = self.basis, other.basis
        if a.shape[1] == 0 or b.shape[1] == 0:
            return LinSubspace.zero(self.ambient_dim)
        combo = nullspace(np.hstack([a, -b]), rank_tol)
        vecs = a @ combo[: a.shape[1]]
        return LinSubspace.from_spanning(vecs, rank_tol) if vecs.size else LinSubspace.zero(self.ambient_dim)

    def orthocomplement_within(self, sub: "LinSubspace", rank_tol: float = RANK_TOL) -> "LinSubspace":
        """Euclidean complement of ``sub`` inside this subspace."""
        rest = sub.project_off(self.basis)
        return LinSubspace.from_spanning(rest, rank_tol)


def subspace_equal(a: LinSubspace, b: LinSubspace, rank_tol: float = RANK_TOL) -> tuple[bool, float]:
    """Equality via rank([A|B]) == rank(A) == rank(B); also returns the worst two-sided residual."""
    ra, rb = a.dim, b.dim
    if ra == 0 and rb == 0:
        return True, 0.0
    r_union = matrix_rank(np.hstack([a.basis, b.basis]), rank_tol)
    resid = max(b.residual_off(a.basis), a.residual_off(b.basis))
    return (r_union == ra == rb), resid


@dataclass(frozen=True)
class FormSpace:
    """R^n with a skew bilinear form, possibly singular; the kernel is explicit."""

    dim: int
    form: np.ndarray

    def __post_init__(self):
        if self.form.shape != (self.dim, self.dim):
            raise DimensionMismatch("form must be n x n")
        if self.dim == 0:
            return
        scale = max(1.0, float(np.max(np.abs(self.form))))
        skew_defect = float(np.max(np.abs(self.form + self.form.T)))
        if skew_defect > 1e-12 * scale:
            raise ValueError(f"form is not skew-symmetric (defect {skew_defect:.3e})")

    @cached_property
    def kernel(self) -> LinSubspace:
        return LinSubspace(self.dim, nullspace(self.form))

    @property
    def kernel_dim(self) -> int:
        return self.kernel.dim

    def pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a).T @ self.form @ np.asarray(b)


@dataclass(frozen=True)
class CoisotropyCheck:
    coisotropic: bool
    defect: int
    worst_residual: float
    orthogonal_dim: int
    kernel_dim: int


def orthogonal(space: FormSpace, sub: LinSubspace, rank_tol: float = RANK_TOL) -> LinSubspace:
    """All v with form(v, w) = 0 for w in the subspace; always contains ker(form)."""
    if sub.ambient_dim != space.dim:
        raise DimensionMismatch("subspace lives in a different ambient space")
    if sub.dim == 0:
        return LinSubspace.full(space.dim)
    return LinSubspace(space.dim, nullspace(sub.basis.T @ space.form, rank_tol))


def is_coisotropic(
    space: FormSpace,
    sub: LinSubspace,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = RANK_TOL,
) -> CoisotropyCheck:
    """Whether orthogonal(sub) lies in sub + ker(form).

    The defect counts independent violating directions (singular values of the
    off-subspace residual above ``tol``); worst_residual is the largest column
    norm of that residual for an orthonormal basis of the orthogonal space.
    """
    ortho = orthogonal(space, sub, rank_tol)
    target = sub.union(space.kernel, rank_tol=rank_tol)
    if ortho.dim == 0:
        return CoisotropyCheck(True, 0, 0.0, 0, space.kernel_dim)
    resid = target.project_off(ortho.basis)
    worst = float(np.max(np.linalg.norm(resid, axis=0)))
    svals = np.linalg.svd(resid, compute_uv=False)
    defect = int(np.sum(svals > tol))
    return CoisotropyCheck(defect == 0, defect, worst, ortho.dim, space.kernel_dim)


def annihilator_lemma_check(
    f_mat: np.ndarray,
    target: LinSubspace,
    rank_tol: float = RANK_TOL,
) -> tuple[bool, float]:
    """Verify Ann(F^{-1}(T)) = F^t(Ann(T)) for a linear map F: R^q -> R^p.

    Annihilators are identified with Euclidean orthogonal complements.
    Returns (equal, residual).
    """
    f_mat = np.atleast_2d(np.asarray(f_mat, dtype=float))
    p, q = f_mat.shape
    if target.ambient_dim != p:
        raise DimensionMismatch("target subspace must live in the codomain")
    # F^{-1}(T): kernel of (project off T) o F
    proj_off_t = f_mat - target.basis @ (target.basis.T @ f_mat) if target.dim else f_mat
    preimage = LinSubspace(q, nullspace(proj_off_t, rank_tol))
    lhs = LinSubspace(q, nullspace(preimage.basis.T, rank_tol)) if preimage.dim else LinSubspace.full(q)
    ann_t = LinSubspace(p, nullspace(target.basis.T, rank_tol)) if target.dim else LinSubspace.full(p)
    rhs = LinSubspace.from_spanning(f_mat.T @ ann_t.basis, rank_tol) if ann_t.dim else LinSubspace.zero(q)
    return subspace_equal(lhs, rhs, rank_tol)


@dataclass(frozen=True)
class QuotientForm:
    """Reduction of a coisotropic subspace: the form on C / (C ∩ C^perp)."""

    space: FormSpace
    projection: np.ndarray      # maps ambient vectors to quotient coordinates
    radical_dim: int

    @property
    def dim(self) -> int:
        return self.space.dim


def quotient_form(
    space: FormSpace,
    sub: LinSubspace,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = RANK_TOL,
) -> QuotientForm:
    """Form induced on sub / (sub ∩ sub^perp); nondegenerate by construction.

    Raises NotCoisotropic when the subspace fails the (kernel-relative)
    coisotropy test, since only then is the quotient the symplectic reduction.
    """
    check = is_coisotropic(space, sub, tol, rank_tol)
    if not check.coisotropic:
        raise NotCoisotropic(f"defect {check.defect}, worst residual {check.worst_residual:.3e}")
    radical = sub.intersection(orthogonal(space, sub, rank_tol), rank_tol)
    complement = sub.orthocomplement_within(radical, rank_tol)
    reduced = complement.basis.T @ space.form @ complement.basis
    reduced = 0.5 * (reduced - reduced.T)   # strip roundoff symmetric part
    return QuotientForm(FormSpace(complement.dim, reduced), complement.basis.T, radical.dim)


@dataclass(frozen=True)
class StagesReport:
    chain_ok: bool                 # V^perp ⊂ W^perp ⊂ W ⊂ V (mod kernel)
    chain_residual: float
    quotient_coisotropic: bool
    quotient_defect: int
    dims_match: bool
    reduced_dim: int
    double_reduced_dim: int
    form_agreement: float

    @property
    def passed(self) -> bool:
        return self.chain_ok and self.quotient_coisotropic and self.dims_match \
            and self.form_agreement <= 1e-9


def reduction_in_stages_check(
    space: FormSpace,
    big: LinSubspace,
    small: LinSubspace,
    tol: float = DEFAULT_TOLS.coisotropy,
    rank_tol: float = RANK_TOL,
) -> StagesReport:
    """Check the three reduction-in-stages clauses for small ⊂ big with small coisotropic.

    (1) big^perp ⊂ small^perp ⊂ small ⊂ big;
    (2) small/big^perp is coisotropic in big/big^perp with the induced form;
    (3) the reduction of small equals the reduction of its image in the
        quotient, by dimension count and by Gram-matrix agreement on
        representatives.
    """
    if big.residual_off(small.basis) > 1e-9:
        raise PreconditionFailed("small subspace is not contained in the big one")
    small_check = is_coisotropic(space, small, tol, rank_tol)
    if not small_check.coisotropic:
        raise PreconditionFailed("small subspace is not coisotropic")

    ker = space.kernel
    big_perp = orthogonal(space, big, rank_tol)
    small_perp = orthogonal(space, small, rank_tol)

    r1 = small_perp.union(ker, rank_tol=rank_tol).residual_off(big_perp.basis)
    r2 = small.union(ker, rank_tol=rank_tol).residual_off(small_perp.basis)
    r3 = big.union(ker, rank_tol=rank_tol).residual_off(small.basis)
    chain_residual = max(r1, r2, r3)
    chain_ok = chain_residual <= tol

    # induced form on big / (big ∩ big^perp), with small mapped through
    radical = big.intersection(big_perp, rank_tol)
    complement = big.orthocomplement_within(radical, rank_tol)
    induced = FormSpace(complement.dim, _skew_clean(complement.basis.T @ space.form @ complement.basis))
    small_image = LinSubspace.from_spanning(complement.basis.T @ small.basis, rank_tol)
    q_check = is_coisotropic(induced, small_image, tol, rank_tol)

    reduced = quotient_form(space, small, tol, rank_tol)
    double_reduced = quotient_form(induced, small_image, tol, rank_tol)
    dims_match = reduced.dim == double_reduced.dim

    # Gram agreement on representatives: for w, w' in small,
    # form(w, w') equals induced(Pw, Pw') because the radical pairs to zero with big.
    reps = small.orthocomplement_within(small.intersection(small_perp, rank_tol), rank_tol)
    g1 = reps.basis.T @ space.form @ reps.basis
    img = complement.basis.T @ reps.basis
    g2 = img.T @ induced.form @ img
    form_agreement = float(np.max(np.abs(g1 - g2))) if g1.size else 0.0

    return StagesReport(
        chain_ok=chain_ok,
        chain_residual=chain_residual,
        quotient_coisotropic=q_check.coisotropic,
        quotient_defect=q_check.defect,
        dims_match=dims_match,
        reduced_dim=reduced.dim,
        double_reduced_dim=double_reduced.dim,
        form_agreement=form_agreement,
    )


def _skew_clean(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat - mat.T)


def standard_symplectic(n_pairs: int) -> FormSpace:
    """The block form with pairing(e_{2i}, e_{2i+1}) = 1."""
    n = 2 * n_pairs
    form = np.zeros((n, n))
    for i in range(n_pairs):
        form[2 * i, 2 * i + 1] = 1.0
        form[2 * i + 1, 2 * i] = -1.0
    return FormSpace(n, form)


def random_isotropic(space: FormSpace, dim: int, rng: np.random.Generator,
                     rank_tol: float = RANK_TOL) -> LinSubspace:
    """Greedy random isotropic subspace of the given dimension."""
    vecs: list[np.ndarray] = []
    attempts = 0
    while len(vecs) < dim:
        attempts += 1
        if attempts > 200 * (dim + 1):
            raise PreconditionFailed("could not build an isotropic subspace of that dimension")
        if vecs:
            basis = np.column_stack(vecs)
            candidates = nullspace(basis.T @ space.form, rank_tol)
            if candidates.shape[1] == 0:
                raise PreconditionFailed("no isotropic extension exists")
            v = candidates @ rng.standard_normal(candidates.shape[1])
            v = v - basis @ (basis.T @ v)
        else:
            v = rng.standard_normal(space.dim)
        norm = np.linalg.norm(v)
        if norm < 1e-8:
            continue
        vecs.append(v / norm)
    return LinSubspace.from_spanning(np.column_stack(vecs), rank_tol)
