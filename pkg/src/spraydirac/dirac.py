"""Pairs of vector fields and one-forms on TR^n, and subbundles spanned by
them.

A section here is an element (X, alpha) of the direct sum of the tangent
and cotangent bundles.  The symmetric pairing is beta(X) + alpha(Y), with
no 1/2 factor; the antisymmetrized bracket keeps its usual 1/2 on the
exact correction term.  Structures are handled through finite generating
families, checked pointwise: isotropy and rank at sampled points, bracket
closure as a numeric residual against the evaluated span.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    AnnihilatorMismatchError, DistributionMembershipError, InternalError,
    RankDeficientError, SingularLocusError, ValidationError,
)
from .expr import (
    Add, Const, Context, Expr, Mul, Neg, Point, SampleConfig, Tri, ZERO,
    evaluate, evaluate_with_magnitude, is_zero, opaque_assignments,
    sample_points, simplify, sum_exprs,
)
from .forms import TwoForm, d_scalar, interior_product, lie_derivative
from .geometry import OneForm, VectorField, lie_bracket

__all__ = [
    "Section", "AlmostDirac", "pairing", "courant_bracket", "jacobi_anomaly",
    "from_distribution", "gauge_transform", "is_isotropic_at", "is_maximal_at",
    "involutivity_residual", "kernel_at", "leaf_two_form_at",
]

HALF = Const(Fraction(1, 2))


@dataclass(frozen=True)
class Section:
    """A tangent-plus-cotangent element (X, alpha)."""

    X: VectorField
    alpha: OneForm

    def __post_init__(self):
        if self.X.n != self.alpha.n:
            raise ValidationError("section halves live on different dimensions")

    @property
    def n(self) -> int:
        return self.X.n

    @classmethod
    def of_field(cls, X: VectorField) -> "Section":
        return cls(X, OneForm.zero(X.n))

    @classmethod
    def of_form(cls, alpha: OneForm) -> "Section":
        return cls(VectorField.zero(alpha.n), alpha)

    def simplified(self) -> "Section":
        return Section(self.X.simplified(), self.alpha.simplified())

    def components(self) -> list[Expr]:
        return ([self.X.component(k) for k in range(2 * self.n)]
                + [self.alpha.component(k) for k in range(2 * self.n)])

    def evaluate(self, p: Point, ctx: Context, opaque=None) -> np.ndarray:
        return np.array([evaluate(c, p, ctx, opaque) for c in self.components()])

    def is_structurally_zero(self) -> bool:
        return all(c == ZERO for c in self.components())


def pairing(a: Section, b: Section) -> Expr:
    """beta(X) + alpha(Y); symmetric, no 1/2 normalization."""
    if a.n != b.n:
        raise ValidationError("pairing of sections on different dimensions")
    return simplify(Add((b.alpha(a.X), a.alpha(b.X))))


def courant_bracket(a: Section, b: Section) -> Section:
    """([X,Y], L_X beta - L_Y alpha + (1/2) d(alpha(Y) - beta(X)))."""
    if a.n != b.n:
        raise ValidationError("bracket of sections on different dimensions")
    vec = lie_bracket(a.X, b.X)
    scalar = simplify(Add((a.alpha(b.X), Neg(b.alpha(a.X)))))
    correction = d_scalar(Mul((HALF, scalar)), a.n)
    form = lie_derivative(a.X, b.alpha) + lie_derivative(b.X, a.alpha).scaled(-1)
    form = form + correction
    return Section(vec, form.simplified())


def jacobi_anomaly(a1: Section, a2: Section, a3: Section, p: Point,
                   ctx: Context, opaque=None) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the bracket-Jacobi defect identity, evaluated at p.

    The cyclic double bracket equals the exact one-form d T with
    T = (1/6) * sum over cyclic permutations of the pairing of a double
    bracket with the remaining section.  With the unnormalized pairing the
    prefactor is 1/6 (it is 1/3 under the half-normalized pairing).  Both
    sides are returned as flat vectors over (vector comps, form comps).
    """
    n = a1.n
    cyc = ((a1, a2, a3), (a2, a3, a1), (a3, a1, a2))
    lhs_sections = [courant_bracket(courant_bracket(x, y), z) for x, y, z in cyc]
    t_terms = [pairing(courant_bracket(x, y), z) for x, y, z in cyc]
    T = simplify(Mul((Const(Fraction(1, 6)), sum_exprs(t_terms))))
    rhs_form = d_scalar(T, n)
    all_exprs: list[Expr] = []
    for s in lhs_sections:
        all_exprs.extend(s.components())
    all_exprs.extend(rhs_form.dx + rhs_form.dy)
    if opaque is None:
        rng = np.random.default_rng(SampleConfig().seed)
        opaque = opaque_assignments(all_exprs, p, ctx, rng)
    lhs = np.zeros(4 * n)
    for s in lhs_sections:
        lhs += s.evaluate(p, ctx, opaque)
    rhs = np.concatenate([
        np.zeros(2 * n),
        [evaluate(rhs_form.component(k), p, ctx, opaque) for k in range(2 * n)],
    ])
    return lhs, rhs


@dataclass(eq=False)
class AlmostDirac:
    """Finite generating family of sections with provenance bookkeeping.

    ann_rank_deficit records how far a user-supplied annihilator family
    falls short of complementing the distribution; deficient structures
    are accepted and the deficit is surfaced in reports instead of being
    silently patched.
    """

    n: int
    generators: tuple[Section, ...]
    provenance: str = "explicit"
    ann_rank_deficit: int = 0
    singular_loci: tuple[Expr, ...] = ()
    auto_annihilator: bool = False
    dist_rank: int | None = None
    gauge_of: "AlmostDirac | None" = None
    gauge_form: TwoForm | None = None
    _brackets: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.generators = tuple(g.simplified() for g in self.generators)
        for g in self.generators:
            if g.n != self.n:
                raise ValidationError("generator dimension mismatch")

    def bracket(self, i: int, j: int) -> Section:
        key = (i, j)
        if key not in self._brackets:
            self._brackets[key] = courant_bracket(
                self.generators[i], self.generators[j]).simplified()
        return self._brackets[key]

    def all_exprs(self) -> list[Expr]:
        out: list[Expr] = []
        for g in self.generators:
            out.extend(g.components())
        return out

    def _guard_locus(self, p: Point, ctx: Context) -> None:
        for locus in self.singular_loci:
            if abs(evaluate(locus, p, ctx)) <= 1e-9:
                raise SingularLocusError("point lies on a declared singular locus")

    def generator_matrix(self, p: Point, ctx: Context, opaque=None) -> np.ndarray:
        """Rows are evaluated generators; auto-annihilator rows appended
        when the structure was built from a distribution alone."""
        if opaque is None:
            rng = np.random.default_rng(SampleConfig().seed)
            opaque = opaque_assignments(self.all_exprs(), p, ctx, rng)
        rows = [g.evaluate(p, ctx, opaque) for g in self.generators]
        if self.auto_annihilator:
            vec_rows = np.array([r[: 2 * self.n] for r in rows
                                 if np.linalg.norm(r[2 * self.n:]) <= 1e-12])
            if vec_rows.size:
                null = scipy.linalg.null_space(vec_rows)
                for q in range(null.shape[1]):
                    rows.append(np.concatenate([np.zeros(2 * self.n), null[:, q]]))
        return np.array(rows)


def _matrix_rank(M: np.ndarray, tol: float) -> int:
    if M.size == 0:
        return 0
    scale = max(1.0, float(np.max(np.abs(M))))
    s = scipy.linalg.svdvals(M)
    return int(np.sum(s > tol * scale))


def from_distribution(D_gens: Sequence[VectorField],
                      ann_gens: Sequence[OneForm] | None,
                      ctx: Context,
                      cfg: SampleConfig | None = None,
                      loci: Sequence[Expr] = (),
                      tol: float = 1e-9) -> AlmostDirac:
    """Build the structure spanned by (X_i, 0) and (0, eta_j).

    Annihilation eta_j(X_i) = 0 is checked symbolically first, falling back
    to sampled evaluation; a provable violation is reported with a witness
    point.  Generator independence and annihilator rank are measured at
    sampled points; a short annihilator family is recorded as a deficit.
    """
    if not D_gens:
        raise ValidationError("need at least one distribution generator")
    n = D_gens[0].n
    for X in D_gens:
        if X.n != n:
            raise ValidationError("distribution generator dimension mismatch")
    auto = ann_gens is None
    etas = tuple(ann_gens or ())
    for eta in etas:
        if eta.n != n:
            raise ValidationError("annihilator generator dimension mismatch")
    cfg = cfg or SampleConfig()
    rng = np.random.default_rng(cfg.seed)
    pts = sample_points(ctx, cfg, loci, count=max(8, cfg.points // 2), rng=rng)

    for eta in etas:
        for X in D_gens:
            resid = simplify(eta(X))
            verdict = is_zero(resid, ctx, cfg, loci)
            if verdict is Tri.PROVEN_ZERO:
                continue
            worst = None
            for p in pts:
                opaque = opaque_assignments((resid,), p, ctx, rng, cfg)
                val, mag = evaluate_with_magnitude(resid, p, ctx, opaque)
                if abs(val) > tol * max(1.0, mag):
                    worst = (p, val)
                    break
            if worst is not None:
                raise AnnihilatorMismatchError(
                    "annihilator does not vanish on the distribution: "
                    f"value {worst[1]:.3e} at a sampled point", witness=worst[0])
            if verdict is Tri.PROVEN_NONZERO:
                # sampling disagreed with the symbolic verdict; be loud
                raise AnnihilatorMismatchError(
                    "annihilator pairing is provably nonzero but no witness "
                    "point was found inside the sample box")

    k = len(D_gens)
    ann_rank = 0
    all_comps: list[Expr] = []
    for X in D_gens:
        all_comps.extend(X.component(i) for i in range(2 * n))
    for eta in etas:
        all_comps.extend(eta.component(i) for i in range(2 * n))
    for p in pts:
        opaque = opaque_assignments(all_comps, p, ctx, rng, cfg)
        D_mat = np.array([[evaluate(X.component(i), p, ctx, opaque)
                           for i in range(2 * n)] for X in D_gens])
        if _matrix_rank(D_mat, tol) < k:
            raise RankDeficientError(
                f"distribution generators dependent at a sampled point "
                f"(rank < {k})")
        if etas:
            A_mat = np.array([[evaluate(eta.component(i), p, ctx, opaque)
                               for i in range(2 * n)] for eta in etas])
            ann_rank = max(ann_rank, _matrix_rank(A_mat, tol))

    deficit = 0 if auto else (2 * n - k) - ann_rank
    if deficit < 0:
        raise InternalError("annihilator rank exceeds complement dimension")
    gens = [Section.of_field(X) for X in D_gens]
    gens += [Section.of_form(eta) for eta in etas]
    return AlmostDirac(
        n=n, generators=tuple(gens), provenance="from_distribution",
        ann_rank_deficit=deficit, singular_loci=tuple(loci),
        auto_annihilator=auto, dist_rank=k)


def gauge_transform(L: AlmostDirac, omega: TwoForm) -> AlmostDirac:
    """(X, alpha) becomes (X, alpha + i_X omega) generator by generator."""
    if omega.n != L.n:
        raise ValidationError("gauge form dimension mismatch")
    gens = tuple(Section(g.X, (g.alpha + interior_product(g.X, omega)).simplified())
                 for g in L.generators)
    return AlmostDirac(
        n=L.n, generators=gens, provenance=f"gauge({L.provenance})",
        ann_rank_deficit=L.ann_rank_deficit, singular_loci=L.singular_loci,
        auto_annihilator=L.auto_annihilator, dist_rank=L.dist_rank,
        gauge_of=L, gauge_form=omega)


def is_isotropic_at(L: AlmostDirac, p: Point, ctx: Context,
                    tol: float = 1e-9, opaque=None) -> bool:
    L._guard_locus(p, ctx)
    B = L.generator_matrix(p, ctx, opaque)
    n = L.n
    V, W = B[:, : 2 * n], B[:, 2 * n:]
    gram = V @ W.T + W @ V.T
    scale = max(1.0, float(np.max(np.sum(B * B, axis=1))))
    return bool(np.max(np.abs(gram)) <= tol * scale)


def is_maximal_at(L: AlmostDirac, p: Point, ctx: Context,
                  tol: float = 1e-9, opaque=None) -> bool:
    L._guard_locus(p, ctx)
    B = L.generator_matrix(p, ctx, opaque)
    return _matrix_rank(B, tol) == 2 * L.n


def involutivity_residual(L: AlmostDirac, p: Point, ctx: Context,
                          tol: float = 1e-9, require_maximal: bool = True,
                          opaque=None) -> float:
    """Largest norm of a generator bracket's component outside span(L_p).

    Zero residual at p is the pointwise closure condition.  With
    require_maximal the evaluated span must have full rank 2n; passing
    False permits measuring the residual against a deficient span, which
    only ever overestimates closure failure.
    """
    L._guard_locus(p, ctx)
    g = len(L.generators)
    if opaque is None:
        exprs = L.all_exprs()
        for i in range(g):
            for j in range(i + 1, g):
                exprs.extend(L.bracket(i, j).components())
        rng = np.random.default_rng(SampleConfig().seed)
        opaque = opaque_assignments(exprs, p, ctx, rng)
    B = L.generator_matrix(p, ctx, opaque)
    rank = _matrix_rank(B, tol)
    if rank < 2 * L.n and require_maximal:
        raise RankDeficientError(
            f"evaluated span has rank {rank} < {2 * L.n} at the given point")
    worst = 0.0
    for i in range(g):
        for j in range(i + 1, g):
            u = L.bracket(i, j).evaluate(p, ctx, opaque)
            sol, *_ = np.linalg.lstsq(B.T, u, rcond=None)
            resid = u - B.T @ sol
            worst = max(worst, float(np.linalg.norm(resid)))
    return worst


def kernel_at(L: AlmostDirac, p: Point, ctx: Context,
              tol: float = 1e-9) -> list[np.ndarray]:
    """Orthonormal basis of the vectors v with (v, 0) in the evaluated span."""
    L._guard_locus(p, ctx)
    B = L.generator_matrix(p, ctx)
    n = L.n
    V, W = B[:, : 2 * n], B[:, 2 * n:]
    null = scipy.linalg.null_space(W.T)
    if null.shape[1] == 0:
        return []
    candidates = (V.T @ null).T
    scale = max(1.0, float(np.max(np.abs(B))))
    keep = candidates[np.linalg.norm(candidates, axis=1) > tol * scale]
    if keep.size == 0:
        return []
    _, s, vt = np.linalg.svd(keep, full_matrices=False)
    return [vt[i] for i in range(len(s)) if s[i] > tol * scale]


def leaf_two_form_at(L: AlmostDirac, p: Point, Xv: np.ndarray, Yv: np.ndarray,
                     ctx: Context, tol: float = 1e-9) -> float:
    """omega(Xv, Yv) = alpha(Yv) for any alpha with (Xv, alpha) in the span.

    Well-definedness across the solution set is asserted by recomputing
    with a second solution whenever one exists.
    """
    L._guard_locus(p, ctx)
    B = L.generator_matrix(p, ctx)
    n = L.n
    V, W = B[:, : 2 * n], B[:, 2 * n:]
    Xv = np.asarray(Xv, dtype=float)
    Yv = np.asarray(Yv, dtype=float)
    for v, name in ((Xv, "first"), (Yv, "second")):
        sol, *_ = np.linalg.lstsq(V.T, v, rcond=None)
        if np.linalg.norm(V.T @ sol - v) > tol * max(1.0, np.linalg.norm(v)):
            raise DistributionMembershipError(
                f"{name} argument is outside the characteristic distribution")
    c, *_ = np.linalg.lstsq(V.T, Xv, rcond=None)
    alpha = W.T @ c
    value = float(alpha @ Yv)
    null = scipy.linalg.null_space(V.T)
    if null.shape[1]:
        alpha2 = W.T @ (c + null[:, 0])
        value2 = float(alpha2 @ Yv)
        if abs(value2 - value) > max(tol, 1e-9 * max(1.0, abs(value))):
            raise InternalError(
                "leaf two-form value depends on the solution choice; "
                "the structure is not isotropic over these arguments")
    return value
