"""Conserved-quantity checks for second-order fields.

The central object is the one-form rho = dH - i_S omega.  When rho kills a
distribution D containing S, the function H is constant along the flow of
S; when D is additionally integrable and omega closed, the pair (H, omega)
upgrades to a certificate that the dynamics is generated through the
gauged structure built from D.  Symbolic verdicts come from is_zero;
numeric confirmation integrates the flow and watches H drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DistributionMembershipError, EvalDomainError, SingularLocusError,
    ValidationError,
)
from .expr import (
    Context, Expr, Point, SampleConfig, Tri, ZERO,
    compile_exprs, evaluate, evaluate_with_magnitude, is_zero,
    opaque_assignments, sample_points, simplify, tri_all,
)
from .forms import TwoForm, d_scalar, exterior_derivative_2, interior_product
from .geometry import (
    OneForm, SemiSpray, VectorField, berwald_frame, is_flat, is_spray,
    lie_bracket, span_membership,
)
from .dirac import AlmostDirac, from_distribution, gauge_transform

__all__ = [
    "MotionReport", "Trajectory", "residual", "is_constant_of_motion",
    "integrate_sode", "conservation_drift", "hamiltonian_certificate",
    "LOCUS_GUARD",
]

# Integration aborts when a declared singular-locus expression gets this
# close to zero; small enough to keep the usable trajectory long, large
# enough that coefficient evaluation stays finite.
LOCUS_GUARD = 1e-3


@dataclass
class MotionReport:
    """Outcome of the annihilation test and, optionally, the certificate."""

    residual_form: OneForm
    residual_components: tuple[Expr, ...]
    residual_verdicts: tuple[Tri, ...]
    numeric_max_residual: float
    s_of_h: Tri
    trivial: bool
    d_integrable: Tri | None = None
    omega_closed: Tri | None = None
    overall: str = "not-evaluated"
    structure: AlmostDirac | None = None

    @property
    def residual_all_zero(self) -> bool:
        return all(v is Tri.PROVEN_ZERO for v in self.residual_verdicts)


@dataclass
class Trajectory:
    """Numerically integrated first-order flow (positions then velocities)."""

    n: int
    times: np.ndarray
    states: np.ndarray
    method: str
    dt: float
    params: dict
    aborted: bool = False
    abort_reason: str | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.times) != len(self.states):
            raise ValidationError("trajectory time/state length mismatch")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValidationError("trajectory times must strictly increase")

    def point(self, i: int) -> Point:
        row = self.states[i]
        return Point(tuple(row[: self.n]), tuple(row[self.n:]), dict(self.params))

    def points(self):
        for i in range(len(self.times)):
            yield self.point(i)


def is_constant_of_motion(S: SemiSpray, H: Expr, ctx: Context,
                          cfg: SampleConfig | None = None) -> Tri:
    """Verdict on the derivative of H along the flow field of S."""
    return is_zero(S.vector_field()(H), ctx, cfg, S.singular_loci)


def _spray_field_numeric(S: SemiSpray, ctx: Context):
    """Compile z -> (y, -2G(z)) plus the singular-locus values."""
    gfun = compile_exprs(S.G, ctx)
    loci_fun = compile_exprs(S.singular_loci, ctx) if S.singular_loci else None
    n = S.n

    def f(z: np.ndarray, params: dict) -> np.ndarray:
        g = gfun(z, params)
        out = np.empty(2 * n)
        out[:n] = z[n:]
        out[n:] = [-2.0 * gi for gi in g]
        return out

    def loci(z: np.ndarray, params: dict) -> tuple:
        if loci_fun is None:
            return ()
        return loci_fun(z, params)

    def guard(z: np.ndarray, params: dict) -> float:
        vals = loci(z, params)
        return min((abs(v) for v in vals), default=np.inf)

    return f, guard, loci


def integrate_sode(S: SemiSpray, p0: Point, dt: float, steps: int,
                   method: str = "rk4", ctx: Context | None = None,
                   rtol: float = 1e-9, atol: float = 1e-12) -> Trajectory:
    """March the first-order system from p0.

    The fixed-step method is the classic fourth-order scheme; the adaptive
    one delegates to scipy's embedded 4(5) pair.  Hitting a declared
    singular locus or producing a non-finite state stops the run early and
    returns the partial trajectory with the abort flag set.
    """
    if dt <= 0:
        raise ValidationError("step size must be positive")
    if method not in ("rk4", "rk45"):
        raise ValidationError(f"unknown integration method {method!r}")
    ctx = ctx or Context(dim=S.n)
    f, guard, loci = _spray_field_numeric(S, ctx)
    params = dict(ctx.params)
    params.update(p0.params)
    z0 = np.concatenate([np.asarray(p0.x, float), np.asarray(p0.y, float)])
    if guard(z0, params) <= LOCUS_GUARD:
        raise SingularLocusError("initial state lies on or near a singular locus")

    if method == "rk45":
        return _integrate_rk45(S, f, guard, loci, z0, params, dt, steps, rtol, atol)

    times = [0.0]
    states = [z0.copy()]
    z = z0.copy()
    locus_signs = np.sign(loci(z0, params))
    aborted = False
    reason = None
    for k in range(steps):
        try:
            k1 = f(z, params)
            k2 = f(z + 0.5 * dt * k1, params)
            k3 = f(z + 0.5 * dt * k2, params)
            k4 = f(z + dt * k3, params)
        except EvalDomainError as exc:
            aborted, reason = True, f"evaluation failed: {exc}"
            break
        z_next = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z_next)):
            aborted, reason = True, "state became non-finite"
            break
        vals = loci(z_next, params)
        signs = np.sign(vals)
        if (min((abs(v) for v in vals), default=np.inf) <= LOCUS_GUARD
                or np.any(signs * locus_signs < 0)):
            aborted, reason = True, "state entered a singular locus"
            break
        locus_signs = signs
        z = z_next
        times.append((k + 1) * dt)
        states.append(z.copy())
    return Trajectory(S.n, np.array(times), np.array(states), "rk4", dt,
                      params, aborted, reason)


def _integrate_rk45(S, f, guard, loci, z0, params, dt, steps, rtol, atol) -> Trajectory:
    T = dt * steps
    aborted = False
    reason = None

    def rhs(t, z):
        return f(z, params)

    # One terminal event per locus on its signed value: a sign change is
    # root-findable, unlike the |value| - guard dip, which a coarse step
    # can hop over entirely.
    events = []
    for idx in range(len(S.singular_loci)):
        def ev(t, z, idx=idx):
            return loci(z, params)[idx]
        ev.terminal = True
        ev.direction = 0
        events.append(ev)
    try:
        sol = solve_ivp(rhs, (0.0, T), z0, method="RK45", rtol=rtol, atol=atol,
                        events=events, max_step=max(dt, T / 50.0))
    except EvalDomainError as exc:
        return Trajectory(S.n, np.array([0.0]), np.array([z0]), "rk45", dt,
                          params, True, f"evaluation failed: {exc}")
    times = sol.t
    states = sol.y.T
    if sol.status == 1:
        aborted, reason = True, "state entered a singular locus"
    elif sol.status < 0:
        aborted, reason = True, f"integrator failure: {sol.message}"
    bad = [i for i, row in enumerate(states)
           if not np.all(np.isfinite(row)) or guard(row, params) <= LOCUS_GUARD]
    if bad:
        cut = bad[0]
        times, states = times[:cut], states[:cut]
        aborted, reason = True, "state entered a singular locus"
    keep = np.concatenate([[True], np.diff(times) > 0]) if len(times) else [True]
    if not len(times):
        times, states = np.array([0.0]), np.array([z0])
    return Trajectory(S.n, times[keep], states[keep], "rk45", dt, params,
                      aborted, reason)


def conservation_drift(traj: Trajectory, H: Expr, ctx: Context) -> float:
    """Max deviation of H along the trajectory from its initial value."""
    hfun = compile_exprs((H,), ctx)
    vals = np.array([hfun(row, traj.params)[0] for row in traj.states])
    return float(np.max(np.abs(vals - vals[0])))


def _check_S_in_span(S: SemiSpray, D_gens: Sequence[VectorField], ctx: Context,
                     cfg: SampleConfig, loci, tol: float = 1e-9) -> None:
    rng = np.random.default_rng(cfg.seed)
    pts = sample_points(ctx, cfg, loci, count=max(8, cfg.points // 4), rng=rng)
    Svec = S.vector_field()
    comps = [Svec.component(i) for i in range(2 * S.n)]
    for X in D_gens:
        comps.extend(X.component(i) for i in range(2 * S.n))
    for p in pts:
        opaque = opaque_assignments(comps, p, ctx, rng, cfg)
        rows = np.array([[evaluate(X.component(i), p, ctx, opaque)
                          for i in range(2 * S.n)] for X in D_gens])
        target = np.array([evaluate(c, p, ctx, opaque) for c in comps[: 2 * S.n]])
        sol, *_ = np.linalg.lstsq(rows.T, target, rcond=None)
        gap = np.linalg.norm(rows.T @ sol - target)
        if gap > tol * max(1.0, np.linalg.norm(target)):
            raise DistributionMembershipError(
                f"flow field leaves the span of the distribution "
                f"(gap {gap:.3e} at a sampled point)")


def residual(S: SemiSpray, omega: TwoForm, H: Expr,
             D_gens: Sequence[VectorField] | None, ctx: Context,
             cfg: SampleConfig | None = None) -> MotionReport:
    """Annihilation test: does dH - i_S omega vanish on the distribution.

    With no distribution given the horizontal frame of S is used, which is
    legitimate only when S is a spray; otherwise the caller must supply
    generators whose span contains S.
    """
    cfg = cfg or SampleConfig()
    loci = S.singular_loci
    if D_gens is None:
        if is_spray(S, ctx, cfg) is not Tri.PROVEN_ZERO:
            raise ValidationError(
                "no distribution given and the coefficients are not "
                "2-homogeneous; supply generators containing the flow field")
        D_gens = list(berwald_frame(S).horizontal)
    else:
        D_gens = list(D_gens)
    _check_S_in_span(S, D_gens, ctx, cfg, loci)

    omega = omega.to_coordinates()
    rho_form = (d_scalar(H, S.n)
                + interior_product(S.vector_field(), omega).scaled(-1))
    comps = tuple(simplify(rho_form(X)) for X in D_gens)
    verdicts = tuple(is_zero(c, ctx, cfg, loci) for c in comps)

    rng = np.random.default_rng(cfg.seed + 1)
    pts = sample_points(ctx, cfg, loci, count=max(8, cfg.points // 2), rng=rng)
    worst = 0.0
    for p in pts:
        opaque = opaque_assignments(comps, p, ctx, rng, cfg)
        for c in comps:
            val, mag = evaluate_with_magnitude(c, p, ctx, opaque)
            worst = max(worst, abs(val) / max(1.0, mag))

    dH = d_scalar(H, S.n)
    trivial = all(dH.component(k) == ZERO for k in range(2 * S.n))
    return MotionReport(
        residual_form=rho_form.simplified(),
        residual_components=comps,
        residual_verdicts=verdicts,
        numeric_max_residual=worst,
        s_of_h=is_constant_of_motion(S, H, ctx, cfg),
        trivial=trivial,
    )


def _distribution_integrable(S: SemiSpray, D_gens: Sequence[VectorField] | None,
                             ctx: Context, cfg: SampleConfig) -> Tri:
    """Closure of generator brackets inside the span, or flatness when the
    distribution is the horizontal one."""
    if D_gens is None:
        return is_flat(S, ctx, cfg)
    verdicts = []
    for i in range(len(D_gens)):
        for j in range(i + 1, len(D_gens)):
            br = lie_bracket(D_gens[i], D_gens[j])
            verdicts.append(span_membership(D_gens, br, ctx, cfg, S.singular_loci))
    return tri_all(verdicts)


def hamiltonian_certificate(S: SemiSpray, omega: TwoForm, H: Expr,
                            D_gens: Sequence[VectorField] | None = None,
                            ann_gens: Sequence[OneForm] | None = None,
                            ctx: Context | None = None,
                            cfg: SampleConfig | None = None) -> MotionReport:
    """Full three-part certificate, plus the generating family it implies.

    The verdict is yes only when the residual vanishes on the distribution,
    the distribution is integrable (flat, in the horizontal default), and
    the two-form is closed.  The emitted structure is the distribution's
    span-with-annihilator gauged by the two-form, whatever the verdict.
    """
    ctx = ctx or Context(dim=S.n)
    cfg = cfg or SampleConfig()
    report = residual(S, omega, H, D_gens, ctx, cfg)
    report.d_integrable = _distribution_integrable(S, D_gens, ctx, cfg)
    closed_comps = exterior_derivative_2(omega).components()
    report.omega_closed = tri_all(
        is_zero(c, ctx, cfg, S.singular_loci) for c in closed_comps)

    if D_gens is None:
        frame = berwald_frame(S)
        base_dist = list(frame.horizontal)
        base_ann = list(frame.dy_adapted) if ann_gens is None else list(ann_gens)
    else:
        base_dist = list(D_gens)
        base_ann = list(ann_gens) if ann_gens is not None else None
    try:
        L = from_distribution(base_dist, base_ann, ctx, cfg, S.singular_loci)
        report.structure = gauge_transform(L, omega)
    except (ValidationError, DistributionMembershipError):
        report.structure = None

    all_green = (report.residual_all_zero
                 and report.d_integrable is Tri.PROVEN_ZERO
                 and report.omega_closed is Tri.PROVEN_ZERO)
    any_red = (any(v is Tri.PROVEN_NONZERO for v in report.residual_verdicts)
               or report.d_integrable is Tri.PROVEN_NONZERO
               or report.omega_closed is Tri.PROVEN_NONZERO)
    report.overall = "yes" if all_green else ("no" if any_red else "unknown")
    return report
