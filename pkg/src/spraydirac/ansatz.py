"""Linear recovery of conserved-quantity candidates.

The unknowns are coefficients of H over a monomial dictionary and of a
two-form over constant coordinate-basis generators.  The annihilation
condition (dH - i_S omega)(e_j) = 0 is linear in those coefficients, so
collocating it at sampled points builds a matrix whose nullspace holds
every candidate pair expressible in the dictionaries.  Candidates are then
re-verified symbolically, never trusted from the numerics alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .expr import (
    Const, Context, Expr, Mul, Point, SampleConfig, Tri, Var, ZERO,
    evaluate, format_expr, sample_points, simplify, sum_exprs,
)
from .forms import TwoForm, d_scalar, format_two_form, interior_product
from .geometry import SemiSpray, VectorField, berwald_frame, is_spray
from .motion import MotionReport, _check_S_in_span, hamiltonian_certificate, residual

__all__ = [
    "Ansatz", "CandidateSolution", "SearchResult",
    "monomial_dictionary", "constant_two_form_dictionary",
    "assemble", "solve", "search",
]


def monomial_dictionary(n: int, degree: int) -> list[Expr]:
    """All monomials in the 2n coordinates up to the given total degree."""
    if degree < 0:
        raise ValidationError("dictionary degree must be nonnegative")
    coords = [Var("x", i + 1) for i in range(n)] + [Var("y", a + 1) for a in range(n)]
    out: list[Expr] = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(2 * n), total):
            factors = [coords[i] for i in combo]
            out.append(simplify(Mul(tuple(factors))) if len(factors) > 1
                       else (factors[0] if factors else Const(1)))
    return out


def constant_two_form_dictionary(n: int) -> list[TwoForm]:
    """One unit coordinate-basis two-form per flat index pair."""
    return [TwoForm.single(n, i, j, 1)
            for i in range(2 * n) for j in range(i + 1, 2 * n)]


@dataclass
class Ansatz:
    """Search space: H dictionary, two-form dictionary, collocation plan."""

    n: int
    degree: int = 2
    H_dictionary: list[Expr] | None = None
    omega_dictionary: list[TwoForm] | None = None
    points: int = 0
    box: float = 2.0
    seed: int = 20260823

    def __post_init__(self):
        # None means "use the default dictionary"; [] for omega means "no
        # two-form unknowns at all", which the H-only search mode needs
        if self.H_dictionary is None:
            self.H_dictionary = monomial_dictionary(self.n, self.degree)
        if self.omega_dictionary is None:
            self.omega_dictionary = constant_two_form_dictionary(self.n)
        if not self.H_dictionary:
            raise ValidationError("empty candidate dictionary")
        unknowns = self.unknowns
        if self.points == 0:
            self.points = 3 * unknowns + 5
        if self.points < 3 * unknowns:
            raise ValidationError(
                f"{self.points} collocation points cannot pin down "
                f"{unknowns} unknowns; need at least {3 * unknowns}")

    @property
    def unknowns(self) -> int:
        return len(self.H_dictionary) + len(self.omega_dictionary)

    def h_index(self, e: Expr) -> int:
        target = simplify(e)
        for k, phi in enumerate(self.H_dictionary):
            if simplify(phi) == target:
                return k
        raise ValidationError(f"{format_expr(e)} is not in the H dictionary")

    def omega_index(self, i: int, j: int) -> int:
        for k, w in enumerate(self.omega_dictionary):
            if w.component(i, j) != ZERO and len(dict(w.items())) == 1:
                if (min(i, j), max(i, j)) in dict(w.items()):
                    return len(self.H_dictionary) + k
        raise ValidationError(f"no single-entry form at slot pair ({i},{j})")


@dataclass
class CandidateSolution:
    """One nullspace direction, decoded and re-verified."""

    h_coeffs: np.ndarray
    omega_coeffs: np.ndarray
    H: Expr
    omega: TwoForm
    singular_values: np.ndarray
    report: MotionReport | None = None
    certificate: MotionReport | None = None

    @property
    def verified(self) -> bool:
        return self.report is not None and (
            self.report.residual_all_zero
            or self.report.numeric_max_residual <= 1e-9)

    def describe(self) -> str:
        return "H = " + format_expr(self.H) + " ; omega = " + format_two_form(self.omega)


@dataclass
class SearchResult:
    candidates: list[CandidateSolution]
    nullspace: np.ndarray          # orthonormal columns
    singular_values: np.ndarray
    trivial_dropped: int
    rejected: int
    ansatz: Ansatz

    def project(self, v: np.ndarray) -> tuple[np.ndarray, float]:
        """Project a coefficient vector onto the nullspace; also return the
        relative distance, which is ~0 exactly when the pair was found."""
        P = self.nullspace
        if P.shape[1] == 0:
            return np.zeros_like(v), 1.0
        proj = P @ (P.T @ v)
        return proj, float(np.linalg.norm(v - proj)
                           / max(np.linalg.norm(v), 1e-300))


def _frame_fields(S: SemiSpray, D_gens, ctx: Context, cfg: SampleConfig):
    if D_gens is not None:
        return list(D_gens)
    if is_spray(S, ctx, cfg) is not Tri.PROVEN_ZERO:
        raise ValidationError(
            "no distribution given and the coefficients are not "
            "2-homogeneous; supply generators containing the flow field")
    return list(berwald_frame(S).horizontal)


def assemble(S: SemiSpray, D_gens: Sequence[VectorField] | None, a: Ansatz,
             ctx: Context, cfg: SampleConfig | None = None
             ) -> tuple[np.ndarray, list[Point]]:
    """Collocation matrix: one row per (point, generator), one column per
    dictionary coefficient.  Rows are grouped by point and each group is
    scaled to unit max entry so no point dominates the factorization."""
    cfg = cfg or SampleConfig(points=a.points, box=(-a.box, a.box), seed=a.seed)
    gens = _frame_fields(S, D_gens, ctx, cfg)
    _check_S_in_span(S, gens, ctx, cfg, S.singular_loci)
    Svec = S.vector_field()

    # column expressions: rho contribution of each unknown on each generator
    col_exprs: list[list[Expr]] = []
    for phi in a.H_dictionary:
        dphi = d_scalar(phi, a.n)
        col_exprs.append([simplify(dphi(e)) for e in gens])
    for w in a.omega_dictionary:
        contracted = interior_product(Svec, w)
        col_exprs.append([simplify(Const(-1) * contracted(e)) for e in gens])

    pts = sample_points(ctx, cfg, S.singular_loci, count=a.points)
    g = len(gens)
    M = np.zeros((a.points * g, a.unknowns))
    for pi, p in enumerate(pts):
        block = np.empty((g, a.unknowns))
        for ci, exprs in enumerate(col_exprs):
            for gi, e in enumerate(exprs):
                block[gi, ci] = evaluate(e, p, ctx)
        peak = np.max(np.abs(block))
        if peak > 0:
            block /= peak
        M[pi * g:(pi + 1) * g] = block
    return M, pts


def solve(M: np.ndarray, rank_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Nullspace basis (columns) and the singular values that justify it."""
    u, s, vt = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if len(s) else 0.0
    ncols = M.shape[1]
    null_idx = [i for i in range(ncols)
                if i >= len(s) or s[i] <= rank_tol * max(smax, 1e-300)]
    if smax == 0.0:
        null_idx = list(range(ncols))
    basis = vt.T[:, null_idx] if null_idx else np.zeros((ncols, 0))
    return basis, s


def _snap_vector(v: np.ndarray, max_den: int = 24) -> np.ndarray | None:
    """Try to read the direction as a rational vector with small entries."""
    scale = np.max(np.abs(v))
    if scale == 0:
        return None
    ratios = v / scale
    snapped = np.empty_like(v)
    for i, r in enumerate(ratios):
        fr = Fraction(float(r)).limit_denominator(max_den)
        if abs(float(fr) - r) > 1e-6:
            return None
        snapped[i] = float(fr)
    return snapped


def _decode(a: Ansatz, v: np.ndarray, exact: bool) -> tuple[Expr, TwoForm]:
    hn = len(a.H_dictionary)

    def lift(c: float):
        # snapped vectors carry small exact rationals; keep floats otherwise
        return Const(Fraction(c).limit_denominator(64)) if exact else Const(float(c))

    h_terms = [Mul((lift(c), phi))
               for c, phi in zip(v[:hn], a.H_dictionary) if abs(c) > 1e-13]
    H = simplify(sum_exprs(h_terms))
    omega = TwoForm.zero(a.n)
    for c, w in zip(v[hn:], a.omega_dictionary):
        if abs(c) > 1e-13:
            omega = omega + w.scaled(lift(c))
    return H, omega


def _normalize_direction(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    for x in v:
        if abs(x) > 1e-12:
            return v if x > 0 else -v
    return v


def _canonical_directions(basis: np.ndarray) -> list[np.ndarray]:
    """Gauss-reduce the nullspace so each reported direction is as sparse
    as the space allows; SVD vectors are arbitrary rotations otherwise."""
    B = basis.T.copy()
    rows, cols = B.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(B[r:, c])))
        if abs(B[piv, c]) < 1e-10:
            continue
        B[[r, piv]] = B[[piv, r]]
        B[r] /= B[r, c]
        for k in range(rows):
            if k != r:
                B[k] -= B[k, c] * B[r]
        r += 1
    return [B[i] for i in range(rows)]


def search(S: SemiSpray, D_gens: Sequence[VectorField] | None, a: Ansatz,
           ctx: Context, cfg: SampleConfig | None = None,
           rank_tol: float = 1e-8, with_certificates: bool = True
           ) -> SearchResult:
    """assemble, factor, decode, then keep only what re-verifies.

    Trivial directions (numerically constant H) are counted and dropped;
    directions whose decoded pair fails the symbolic-or-numeric residual
    check are counted as rejected.  Verification always happens at fresh
    sample points, never the collocation points themselves.
    """
    M, pts = assemble(S, D_gens, a, ctx, cfg)
    basis, svals = solve(M, rank_tol)
    verify_cfg = SampleConfig(points=50, box=(-a.box, a.box), seed=a.seed + 101)
    dh_cfg = SampleConfig(points=20, box=(-a.box, a.box), seed=a.seed + 202)
    dh_pts = sample_points(ctx, dh_cfg, S.singular_loci, count=20)

    candidates: list[CandidateSolution] = []
    seen: set[str] = set()
    trivial = 0
    rejected = 0
    for direction in _canonical_directions(basis):
        v = _normalize_direction(direction)
        snapped = _snap_vector(v)
        use = snapped if snapped is not None else v
        H, omega = _decode(a, use, exact=snapped is not None)
        dH = d_scalar(H, a.n)
        dh_norm = 0.0
        for p in dh_pts:
            row = [evaluate(dH.component(k), p, ctx) for k in range(2 * a.n)]
            dh_norm = max(dh_norm, float(np.linalg.norm(row)))
        if dh_norm < 1e-10:
            trivial += 1
            continue
        rep = residual(S, omega, H, D_gens, ctx, verify_cfg)
        cand = CandidateSolution(
            h_coeffs=use[: len(a.H_dictionary)].copy(),
            omega_coeffs=use[len(a.H_dictionary):].copy(),
            H=H, omega=omega, singular_values=svals, report=rep)
        if not cand.verified:
            rejected += 1
            continue
        key = cand.describe()
        if key in seen:
            continue
        seen.add(key)
        if with_certificates:
            cand.certificate = hamiltonian_certificate(
                S, omega, H, D_gens, None, ctx, verify_cfg)
        candidates.append(cand)
    return SearchResult(candidates, basis, svals, trivial, rejected, a)
