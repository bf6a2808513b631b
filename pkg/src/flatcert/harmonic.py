"""Dirichlet Poisson machinery on the half-radius ball and the barrier pipeline.

Constant-source Poisson problems are split into an explicit quadratic
particular solution (exact under the centred stencil) plus a harmonic
remainder solved by red-black successive over-relaxation, so results are
bitwise deterministic.  On top of the solver sit the barrier construction
(super/subsolutions lifted off the regularized surface), the sliding
paraboloid minimization used by the touching argument, harmonic replacement
with its closeness certificate, interior derivative estimates, and the
boundary-to-interior Hoelder bound for harmonic extensions.

On a one-dimensional base "harmonic" degrades to "linear" and every solve is
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from mpmath import mp

from .grid import (
    INTERIOR,
    GridFunction,
    boundary_trace,
    covered_nodes,
    from_function,
    gradient,
    hessian,
    holder_seminorm,
    laplacian,
    restrict,
)
from .ledger import ConstantLedger

__all__ = [
    "RelaxationError",
    "PoissonSolution",
    "BarrierPair",
    "TouchResult",
    "CapsReport",
    "report_to_json",
    "solve_poisson_ball",
    "quadratic_particular",
    "boundary_holder_check",
    "sliding_paraboloid_touch",
    "build_barriers",
    "verify_barrier_separation",
    "harmonic_replacement",
    "verify_harmonic_closeness",
    "harmonic_derivative_estimate",
]

HALF_RADIUS = 0.5
RESIDUAL_FACTOR = 1e-12
MAX_PRINCIPLE_SLACK = 1e-9


class RelaxationError(RuntimeError):
    """The relaxation sweeps did not reach the residual target."""

    def __init__(self, message: str, residual_sup: float):
        super().__init__(message)
        self.residual_sup = residual_sup


@dataclass(frozen=True)
class PoissonSolution:
    """Solution of ``lap(u) = c`` with Dirichlet ring data.

    ``harmonic_part`` is the relaxed remainder (the full solution minus the
    explicit quadratic); ``residual_sup`` is the final sup-norm of its
    discrete Laplacian.
    """

    u: GridFunction
    harmonic_part: GridFunction
    rhs: float
    residual_sup: float
    sweeps: int
    max_principle_ok: bool


def quadratic_particular(layout: GridFunction, c: float) -> GridFunction:
    """``(c / (2 d)) * (|x|^2 - R^2)``: vanishes at radius R, stencil-exact Laplacian c."""
    d = layout.base_dim
    r2 = layout.radius * layout.radius
    coef = c / (2.0 * d)
    if d == 1:
        return from_function(layout, lambda x: coef * (x * x - r2))
    return from_function(layout, lambda x, y: coef * (x * x + y * y - r2))


def _check_ring(boundary: GridFunction):
    ring = boundary.boundary()
    if not np.all(np.isfinite(boundary.values[ring])):
        raise ValueError("boundary trace is incomplete on the ring")


def _relax_harmonic(
    layout: GridFunction,
    ring_values: np.ndarray,
    tol_stop: float,
    omega: float | None,
    max_sweeps: int,
    check_every: int = 16,
) -> tuple[np.ndarray, float, int]:
    """Red-black SOR for the five-point Laplace system; returns (values, residual, sweeps)."""
    h = layout.h
    vals = np.where(layout.boundary(), ring_values, 0.0)
    interior = layout.interior()
    idx = np.argwhere(interior)
    if len(idx) == 0:
        res = 0.0
        out = np.where(layout.inside(), vals, np.nan)
        return out, res, 0
    ring_mean = float(np.mean(ring_values[layout.boundary()]))
    vals[interior] = ring_mean
    vals[~layout.inside()] = 0.0

    shape = vals.shape
    flat = vals.ravel()
    stride = shape[1]
    centers = idx[:, 0] * stride + idx[:, 1]
    north = centers - stride
    south = centers + stride
    west = centers - 1
    east = centers + 1
    color = (idx[:, 0] + idx[:, 1]) % 2

    groups = []
    for c in (0, 1):
        sel = color == c
        groups.append(
            (centers[sel], north[sel], south[sel], west[sel], east[sel])
        )
    if omega is None:
        omega = 2.0 / (1.0 + math.sin(math.pi * h / (2.0 * layout.radius)))

    inv_h2 = 1.0 / (h * h)
    residual = math.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for ctr, n_, s_, w_, e_ in groups:
            acc = flat[n_] + flat[s_] + flat[w_] + flat[e_]
            flat[ctr] = (1.0 - omega) * flat[ctr] + omega * 0.25 * acc
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            residual = 0.0
            for ctr, n_, s_, w_, e_ in groups:
                acc = flat[n_] + flat[s_] + flat[w_] + flat[e_] - 4.0 * flat[ctr]
                m = float(np.max(np.abs(acc))) if len(ctr) else 0.0
                residual = max(residual, m * inv_h2)
            if residual <= tol_stop:
                break
    if residual > tol_stop:
        raise RelaxationError(
            f"relaxation stalled after {sweeps} sweeps "
            f"(residual {residual:.3e}, target {tol_stop:.3e})",
            residual_sup=residual,
        )
    out = vals.reshape(shape)
    out = np.where(layout.inside(), out, np.nan)
    return out, residual, sweeps


def solve_poisson_ball(
    c: float,
    boundary: GridFunction,
    omega: float | None = None,
    max_sweeps: int = 400_000,
) -> PoissonSolution:
    """Solve ``lap(u) = c`` on the ball with the given ring data.

    The quadratic particular solution takes the constant source exactly; the
    remainder relaxes to a discrete-Laplacian residual below
    ``1e-12 * max(1, |c|, osc(ring))``.  The discrete maximum principle of
    the harmonic remainder is asserted on every solve.
    """
    _check_ring(boundary)
    particular = quadratic_particular(boundary, c)
    ring = boundary.boundary()
    g_rem = np.where(ring, boundary.values - particular.values, 0.0)
    ring_osc = float(np.max(g_rem[ring]) - np.min(g_rem[ring])) if ring.any() else 0.0
    ring_sup = float(np.max(np.abs(g_rem[ring]))) if ring.any() else 0.0
    scale = max(1.0, abs(c), ring_osc)
    # the stencil cannot resolve residuals below the round-off floor of the
    # five-point sum at the solution's magnitude
    floor = 64.0 * np.finfo(float).eps * ring_sup / (boundary.h * boundary.h)
    tol_stop = max(RESIDUAL_FACTOR * scale, floor)

    if boundary.base_dim == 1:
        vals = _ring_line(boundary, g_rem)
        residual, sweeps = 0.0, 0
    else:
        vals, residual, sweeps = _relax_harmonic(
            boundary, g_rem, tol_stop, omega, max_sweeps
        )

    harmonic_part = boundary.with_values(vals)
    interior = boundary.interior()
    hi = vals[interior]
    ring_vals = vals[ring]
    slack = MAX_PRINCIPLE_SLACK * scale
    max_ok = bool(
        len(hi) == 0
        or (
            float(np.max(hi)) <= float(np.max(ring_vals)) + slack
            and float(np.min(hi)) >= float(np.min(ring_vals)) - slack
        )
    )
    if not max_ok:
        raise RelaxationError(
            "harmonic solve violated the discrete maximum principle", residual
        )
    total = boundary.with_values(harmonic_part.values + particular.values)
    # restore the exact ring data (particular vanishes only at |x| = R exactly)
    merged = total.values.copy()
    merged[ring] = boundary.values[ring]
    total = boundary.with_values(merged)
    return PoissonSolution(
        u=total,
        harmonic_part=harmonic_part,
        rhs=c,
        residual_sup=residual,
        sweeps=sweeps,
        max_principle_ok=max_ok,
    )


def _ring_line(layout: GridFunction, g_rem: np.ndarray) -> np.ndarray:
    """d = 1: the harmonic extension is the chord through the two ring nodes."""
    ring_idx = np.argwhere(layout.boundary()).ravel()
    left, right = ring_idx.min(), ring_idx.max()
    x = layout.axis_coords()
    vals = g_rem[left] + (g_rem[right] - g_rem[left]) * (x - x[left]) / (x[right] - x[left])
    vals = np.where(layout.inside(), vals, np.nan)
    return vals


def harmonic_replacement(u: GridFunction, radius: float = HALF_RADIUS) -> PoissonSolution:
    """Harmonic function matching ``u`` on the ring of the half-radius ball."""
    sub = restrict(u, radius)
    trace = boundary_trace(sub)
    _check_ring(trace)
    return solve_poisson_ball(0.0, trace)


def _index_offset_map(coarse: GridFunction, fine: GridFunction) -> int:
    if abs(coarse.h - fine.h) > 1e-15:
        raise ValueError("grids must share one spacing")
    return coarse.k - fine.k


@dataclass(frozen=True)
class ClosenessReport:
    """Sup-distance between a field and its harmonic replacement vs. the certified bound."""

    measured: float
    bound: float
    margin: float
    ok: bool
    barrier_gap_measured: float | None
    barrier_gap_ok: bool | None

    @property
    def margin_factor(self) -> float:
        return self.bound / self.measured if self.measured > 0 else math.inf


def verify_harmonic_closeness(
    u: GridFunction,
    w: GridFunction,
    eps: float,
    ledger: ConstantLedger,
    barriers: "BarrierPair | None" = None,
) -> ClosenessReport:
    """Check ``max|u - w| <= closeness_coeff * eps**(gamma*alpha^2/8)``.

    When a barrier pair is supplied, the intermediate bound
    ``max(w_plus - w_minus)`` against the same right-hand side is checked too.
    """
    exponent = float(ledger.gamma) * float(ledger.alpha) ** 2 / 8.0
    bound = ledger.eps_power("closeness_coeff", eps, exponent)
    off = _index_offset_map(u, w)
    sel = np.argwhere(w.inside())
    u_vals = u.values[tuple((sel + off).T)]
    w_vals = w.values[tuple(sel.T)]
    measured = float(np.max(np.abs(u_vals - w_vals)))
    gap_measured = None
    gap_ok = None
    if barriers is not None:
        gap = barriers.w_plus.values - barriers.w_minus.values
        gap_measured = float(np.nanmax(gap))
        gap_ok = bool(gap_measured <= bound)
    return ClosenessReport(
        measured=measured,
        bound=bound,
        margin=bound - measured,
        ok=bool(measured <= bound),
        barrier_gap_measured=gap_measured,
        barrier_gap_ok=gap_ok,
    )


@dataclass(frozen=True)
class CapsReport:
    """Derivative caps on the shrunken ball ``|x| <= 1/2 - r``.

    At desk-scale flatness the regularization scale ``r`` exceeds the domain
    radius and the node set is empty; the caps then hold vacuously and
    ``vacuous`` records that.
    """

    region_radius: float
    n_nodes: int
    vacuous: bool
    grad_measured: float
    hess_entry_measured: float
    hess_norm_measured: float
    cap: float
    split_measured: float
    split_cap: float
    ok: bool


def _hessian_opnorm_2x2(h11, h22, h12):
    mean = 0.5 * (h11 + h22)
    radius = np.sqrt((0.5 * (h11 - h22)) ** 2 + h12 * h12)
    return np.maximum(np.abs(mean + radius), np.abs(mean - radius))


def _derivative_maxima(f: GridFunction, region_radius: float):
    """(n_nodes, max|grad component|, max|hessian entry|, max opnorm) over the region."""
    sel = f.interior()
    idx = np.argwhere(sel)
    coords = (idx - f.k) * f.h
    keep = np.sum(coords * coords, axis=1) <= region_radius * region_radius * (1 + 1e-12)
    idx = idx[keep]
    if len(idx) == 0:
        return 0, 0.0, 0.0, 0.0
    g_max = 0.0
    e_max = 0.0
    n_max = 0.0
    for p in map(tuple, idx):
        g = gradient(f, p)
        H = hessian(f, p)
        g_max = max(g_max, float(np.max(np.abs(g))))
        e_max = max(e_max, float(np.max(np.abs(H))))
        if f.base_dim == 2:
            n_max = max(n_max, float(_hessian_opnorm_2x2(H[0, 0], H[1, 1], H[0, 1])))
        else:
            n_max = max(n_max, float(abs(H[0, 0])))
    return len(idx), g_max, e_max, n_max


@dataclass(frozen=True)
class BarrierPair:
    """Poisson super/subsolution pair trapping the regularized surface.

    ``w_plus`` solves ``lap = -source`` with ring data ``u + lift``;
    ``w_minus`` the mirror image.  ``r`` is the regularization scale
    ``eps**(gamma*alpha/4)``, ``delta_slide`` the paraboloid opening used by
    the sliding test, ``derivative_cap`` the bound ``eps**-1/2`` the caps are
    checked against.
    """

    w_plus: GridFunction
    w_minus: GridFunction
    harmonic_plus: GridFunction
    harmonic_minus: GridFunction
    r: float
    delta_slide: float
    derivative_cap: float
    boundary_lift: float
    source_strength: float
    threshold_ok: bool
    laplacian_dev: float
    laplacian_tol: float
    caps_plus: CapsReport
    caps_minus: CapsReport


def build_barriers(
    u: GridFunction,
    eps: float,
    ledger: ConstantLedger,
    strict: bool = False,
) -> BarrierPair:
    """Construct both barriers over the half-radius ball and audit them.

    The flatness threshold this construction assumes is compared in log
    space and recorded in ``threshold_ok``; with ``strict=True`` a violation
    raises instead.  Derivative caps are measured on ``|x| <= 1/2 - r``
    (possibly empty) for the barriers and their harmonic parts.
    """
    ga = float(ledger.gamma) * float(ledger.alpha)
    alpha = float(ledger.alpha)
    with mp.workdps(ledger.digits):
        threshold_ok = bool(
            mp.log(mp.mpf(eps), 2) <= ledger.threshold("barrier").log2
        )
    if strict and not threshold_ok:
        raise ValueError("flatness exceeds the barrier-stage threshold")

    r = eps ** (ga / 4.0)
    delta = 4.0 * ledger.eps_power("sandwich_gap", eps, 1.0 + ga / 2.0)
    cap = eps**-0.5
    source = 2.0 * ledger.eps_power("touch_slack", eps, ga / 2.0)
    lift = 4.0 * ledger.eps_power("barrier_lift", eps, float(ledger.gamma) * alpha**2 / 8.0)

    sub = restrict(u, HALF_RADIUS)
    trace = boundary_trace(sub)
    _check_ring(trace)
    # superposition: one O(1)-magnitude harmonic extension of u plus the unit
    # source bubble G (lap G = 1, G = 0 on the ring) carry both barriers; the
    # constant lift rides along exactly, avoiding large-value relaxation
    sol_u = solve_poisson_ball(0.0, trace)
    p_unit = quadratic_particular(sub, 1.0)
    sol_p = solve_poisson_ball(0.0, boundary_trace(p_unit))
    bubble = p_unit.values - sol_p.u.values

    def assemble(c: float, lift_signed: float):
        total = sub.with_values(sol_u.u.values + lift_signed + c * bubble)
        harm = sub.with_values(
            sol_u.u.values + lift_signed - c * sol_p.u.values
        )
        return total, harm

    w_plus, harm_plus = assemble(-source, +lift)
    w_minus, harm_minus = assemble(+source, -lift)

    sup_w = float(np.nanmax(np.abs(w_plus.values)))
    dev_tol = 1e-9 * max(1.0, source) + 64.0 * np.finfo(float).eps * sup_w / (u.h * u.h)
    dev = 0.0
    for field, c in ((w_plus, -source), (w_minus, +source)):
        lap = laplacian(field).values
        lap = lap[np.isfinite(lap)]
        if len(lap):
            dev = max(dev, float(np.max(np.abs(lap - c))))

    region = HALF_RADIUS - r
    reports = []
    for total, harm in ((w_plus, harm_plus), (w_minus, harm_minus)):
        n_nodes, gmax, emax, nmax = (0, 0.0, 0.0, 0.0)
        sgmax = 0.0
        if region > 0:
            n_nodes, gmax, emax, nmax = _derivative_maxima(total, region)
            _, hg, he, hn = _derivative_maxima(harm, region)
            sgmax = max(hg, he, hn)
        vacuous = n_nodes == 0
        measured = max(gmax, emax, nmax)
        reports.append(
            CapsReport(
                region_radius=region,
                n_nodes=n_nodes,
                vacuous=vacuous,
                grad_measured=gmax,
                hess_entry_measured=emax,
                hess_norm_measured=nmax,
                cap=cap,
                split_measured=sgmax,
                split_cap=cap / 2.0,
                ok=bool(vacuous or (measured <= cap and sgmax <= cap / 2.0)),
            )
        )

    return BarrierPair(
        w_plus=w_plus,
        w_minus=w_minus,
        harmonic_plus=harm_plus,
        harmonic_minus=harm_minus,
        r=r,
        delta_slide=delta,
        derivative_cap=cap,
        boundary_lift=lift,
        source_strength=source,
        threshold_ok=threshold_ok,
        laplacian_dev=dev,
        laplacian_tol=dev_tol,
        caps_plus=reports[0],
        caps_minus=reports[1],
    )


@dataclass(frozen=True)
class SeparationReport:
    plus_margin: float
    minus_margin: float
    plus_argmin: tuple[int, ...]
    minus_argmin: tuple[int, ...]
    ok: bool


def verify_barrier_separation(u: GridFunction, pair: BarrierPair) -> SeparationReport:
    """Strict ordering ``w_minus < u < w_plus`` on every node of the half ball."""
    w = pair.w_plus
    off = _index_offset_map(u, w)
    sel = np.argwhere(w.inside())
    u_vals = u.values[tuple((sel + off).T)]
    plus_gap = w.values[tuple(sel.T)] - u_vals
    minus_gap = u_vals - pair.w_minus.values[tuple(sel.T)]
    i_plus = int(np.argmin(plus_gap))
    i_minus = int(np.argmin(minus_gap))
    return SeparationReport(
        plus_margin=float(plus_gap[i_plus]),
        minus_margin=float(minus_gap[i_minus]),
        plus_argmin=tuple(sel[i_plus]),
        minus_argmin=tuple(sel[i_minus]),
        ok=bool(plus_gap[i_plus] > 0.0 and minus_gap[i_minus] > 0.0),
    )


@dataclass(frozen=True)
class TouchResult:
    """Outcome of the sliding-paraboloid minimization around ``x0``.

    ``passed`` requires the minimizer strictly inside the scan ball with the
    test function's Laplacian above ``-touch_slack * eps**(gamma*alpha/2)``;
    a minimizer on the rim signals the paraboloid opening was too small for
    the data (the contradiction branch of the touching argument).
    """

    x1: tuple[int, ...]
    x1_coord: np.ndarray
    laplacian_at_touch: float
    threshold: float
    passed: bool
    boundary_hit: bool
    hypothesis_caps_ok: bool
    r: float
    delta: float
    n_scanned: int


def sliding_paraboloid_touch(
    target: GridFunction,
    phi: GridFunction,
    x0,
    ledger: ConstantLedger,
    eps: float,
    r: float | None = None,
    delta: float | None = None,
    touch_tol: float | None = None,
) -> TouchResult:
    """Minimize ``eps*phi + (delta/2)|x-x0|^2 - target`` over the ball ``B_r(x0)``.

    ``target`` carries absolute heights (an upper envelope); ``phi`` is a
    stretched test function on the same layout, required to stay above the
    target (after scaling by ``eps``) throughout the scan region.  Exhaustive
    scan; ties resolve to the row-major-first node.
    """
    if target.values.shape != phi.values.shape or target.h != phi.h:
        raise ValueError("target and test function must share one grid layout")
    ga = float(ledger.gamma) * float(ledger.alpha)
    if r is None:
        r = eps ** (ga / 4.0)
    if delta is None:
        delta = 4.0 * ledger.eps_power("sandwich_gap", eps, 1.0 + ga / 2.0)
    if isinstance(x0, tuple) and all(isinstance(i, (int, np.integer)) for i in x0):
        p0 = tuple(int(i) for i in x0)
    else:
        p0 = tuple(int(round(c / target.h)) + target.k for c in np.atleast_1d(x0))
    x0_coord = target.node_coord(p0)

    sel = target.covered() & phi.covered()
    idx = np.argwhere(sel)
    coords = (idx - target.k) * target.h
    dist2 = np.zeros(len(idx))
    for a in range(target.base_dim):
        d = coords[:, a] - x0_coord[a]
        dist2 += d * d
    keep = dist2 <= r * r * (1 + 1e-12)
    idx, coords, dist2 = idx[keep], coords[keep], dist2[keep]
    if len(idx) == 0:
        raise ValueError("scan ball contains no covered nodes")

    phi_vals = phi.values[tuple(idx.T)]
    tgt_vals = target.values[tuple(idx.T)]
    if touch_tol is None:
        touch_tol = 1e-9 * (1.0 + float(np.max(np.abs(tgt_vals))))
    gap = eps * phi_vals - tgt_vals
    if float(np.min(gap)) < -touch_tol:
        raise ValueError("touching hypothesis violated: scaled test function dips below target")

    scores = eps * phi_vals + 0.5 * delta * dist2 - tgt_vals
    i_best = int(np.argmin(scores))
    x1 = tuple(idx[i_best])
    x1_coord = coords[i_best]
    d1 = math.sqrt(float(dist2[i_best]))
    rim = d1 > r - target.h * (1 + 1e-9)
    domain_rim = phi.mask[x1] != INTERIOR
    boundary_hit = bool(rim or domain_rim)

    lap_val = math.nan
    if phi.mask[x1] == INTERIOR:
        lap_val = float(np.trace(hessian(phi, x1)))
    threshold = -ledger.eps_power("touch_slack", eps, ga / 2.0)

    cap = eps**-0.5
    gmax = emax = nmax = 0.0
    for p in map(tuple, idx):
        if phi.mask[p] != INTERIOR:
            continue
        g = gradient(phi, p)
        H = hessian(phi, p)
        gmax = max(gmax, float(np.max(np.abs(g))))
        emax = max(emax, float(np.max(np.abs(H))))
        if phi.base_dim == 2:
            nmax = max(nmax, float(_hessian_opnorm_2x2(H[0, 0], H[1, 1], H[0, 1])))
        else:
            nmax = max(nmax, float(abs(H[0, 0])))
    caps_ok = bool(max(gmax, emax, nmax) <= cap * (1 + 1e-12))

    passed = bool(
        not boundary_hit and math.isfinite(lap_val) and lap_val >= threshold - 1e-12
    )
    return TouchResult(
        x1=x1,
        x1_coord=x1_coord,
        laplacian_at_touch=lap_val,
        threshold=threshold,
        passed=passed,
        boundary_hit=boundary_hit,
        hypothesis_caps_ok=caps_ok,
        r=r,
        delta=delta,
        n_scanned=len(idx),
    )


@dataclass(frozen=True)
class DerivativeEstimate:
    grad_measured: float
    grad_bound: float
    hess_measured: float
    hess_bound: float
    ok: bool


def harmonic_derivative_estimate(
    w: GridFunction, p: tuple[int, ...], rho: float
) -> DerivativeEstimate:
    """Interior estimate: stencil derivatives at ``p`` against ``(2n/rho) sup|w|``.

    Second derivatives are compared against ``(4n/rho)^2 sup|w|``; the sup
    runs over the nodes of ``B_rho(p)``, which must stay inside the domain.
    """
    p = tuple(int(i) for i in p)
    center = w.node_coord(p)
    if float(np.linalg.norm(center)) + rho > w.radius * (1 + 1e-12):
        raise ValueError("estimate ball exits the domain")
    _, _, vals = covered_nodes(w, center, rho)
    if len(vals) == 0:
        raise ValueError("estimate ball contains no nodes")
    sup = float(np.max(np.abs(vals)))
    n = w.base_dim + 1
    g = gradient(w, p)
    H = hessian(w, p)
    g_meas = float(np.max(np.abs(g)))
    h_meas = float(np.max(np.abs(H)))
    g_bound = (2.0 * n / rho) * sup
    h_bound = (4.0 * n / rho) ** 2 * sup
    return DerivativeEstimate(
        grad_measured=g_meas,
        grad_bound=g_bound,
        hess_measured=h_meas,
        hess_bound=h_bound,
        ok=bool(g_meas <= g_bound and h_meas <= h_bound),
    )


def _pair_seminorm(coords: np.ndarray, vals: np.ndarray, sigma: float, scale: float, block: int = 256) -> float:
    """sup |df| / (|dx| / scale)**sigma over distinct pairs."""
    n = len(vals)
    best = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        dist2 = np.zeros((stop - start, n))
        for a in range(coords.shape[1]):
            d = coords[start:stop, a:a + 1] - coords[None, :, a]
            dist2 += d * d
        num = np.abs(vals[start:stop, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = num / (np.sqrt(dist2) / scale) ** sigma
        ratio[dist2 == 0.0] = -np.inf
        m = float(np.max(ratio))
        best = max(best, m)
    return best


@dataclass(frozen=True)
class BoundaryHolderReport:
    measured_norm: float
    boundary_norm: float
    bound: float
    ok: bool
    sigma: float


def report_to_json(report) -> dict:
    """JSON-ready view of a verification report dataclass.

    Arrays and index tuples become lists; nested report dataclasses recurse.
    Grid fields are dropped (serialize those separately as gf1).
    """
    import dataclasses

    if not dataclasses.is_dataclass(report):
        raise TypeError(f"not a report dataclass: {type(report)!r}")
    out = {}
    for f in dataclasses.fields(report):
        value = getattr(report, f.name)
        if isinstance(value, GridFunction):
            continue
        if dataclasses.is_dataclass(value):
            out[f.name] = report_to_json(value)
        elif isinstance(value, np.ndarray):
            out[f.name] = [float(v) for v in value]
        elif isinstance(value, tuple):
            out[f.name] = [int(v) if isinstance(v, (int, np.integer)) else v for v in value]
        elif isinstance(value, (np.floating, np.integer, np.bool_)):
            out[f.name] = value.item()
        else:
            out[f.name] = value
    return out


def boundary_holder_check(w: GridFunction, sigma: float) -> BoundaryHolderReport:
    """Boundary-to-interior Hoelder estimate for a harmonic field.

    Norms are measured in the frame dilated to the unit ball (distances
    divided by the domain radius): the ``C^(sigma/2)`` norm of ``w`` on the
    closed ball must not exceed ``2 n 5^sigma`` times the ``C^sigma`` norm of
    its ring data.
    """
    if not 0 < sigma <= 1:
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")
    R = w.radius
    n = w.base_dim + 1

    ring = np.argwhere(w.boundary())
    ring_coords = (ring - w.k) * w.h
    ring_vals = w.values[tuple(ring.T)]
    g_norm = float(np.max(np.abs(ring_vals))) + _pair_seminorm(
        ring_coords, ring_vals, sigma, R
    )

    _, coords, vals = covered_nodes(w)
    w_norm = float(np.max(np.abs(vals))) + _pair_seminorm(coords, vals, sigma / 2.0, R)

    bound = 2.0 * n * 5.0**sigma * g_norm
    return BoundaryHolderReport(
        measured_norm=w_norm,
        boundary_norm=g_norm,
        bound=bound,
        ok=bool(w_norm <= bound),
        sigma=sigma,
    )
