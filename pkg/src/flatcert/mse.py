"""Minimal-surface graphs at desk scale.

The quasilinear graph operator

    (1 + |Du|^2) * lap(u) - Du^T D2u Du

is evaluated with the centred stencils of :mod:`flatcert.grid`; the Dirichlet
problem is solved by damped Newton iteration (line search halves the step
until the sup-norm residual decreases), started from the harmonic extension
of the boundary data.  An exact-solution catalogue (affine planes, the
log-cosine-quotient saddle surface) provides oracles, and the one-sided
touching test evaluates the operator on a smooth test function at a touching
point with the sign convention of viscosity solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    INTERIOR,
    GridFunction,
    _shifted,
    boundary_trace,
    from_function,
    gradient,
    hessian,
    make_grid,
)

__all__ = [
    "ConvergenceError",
    "MseSolution",
    "ViscosityVerdict",
    "mse_residual",
    "solve_mse",
    "exact_solution",
    "preset_boundary",
    "viscosity_touch_check",
]

SCHERK_MAX_STRETCH = 1.45  # radius/scale cap keeping cos() away from zero


class ConvergenceError(RuntimeError):
    """Newton failed to reach the residual tolerance."""

    def __init__(self, message: str, residual_sup: float):
        super().__init__(message)
        self.residual_sup = residual_sup


@dataclass(frozen=True)
class MseSolution:
    u: GridFunction
    residual_sup: float
    iterations: int
    tol: float


@dataclass(frozen=True)
class ViscosityVerdict:
    """Outcome of a one-sided touching test.

    ``side`` is where the test function sits relative to the graph;
    ``containment`` names the region (graph subset or its complement) that
    contains the corresponding sub/super-graph of the test function.
    """

    side: str
    containment: str
    operator_value: float
    satisfied: bool
    touch_index: tuple[int, ...]


def _operator_terms(f: GridFunction):
    """Gradient and Hessian stencil fields at interior nodes (NaN elsewhere)."""
    h = f.h
    d = f.base_dim
    v = f.values
    grads = []
    hess_diag = []
    for a in range(d):
        e = tuple(1 if i == a else 0 for i in range(d))
        me = tuple(-1 if i == a else 0 for i in range(d))
        plus, minus = _shifted(v, e), _shifted(v, me)
        grads.append((plus - minus) / (2.0 * h))
        hess_diag.append((plus - 2.0 * v + minus) / (h * h))
    cross = None
    if d == 2:
        cross = (
            _shifted(v, (1, 1))
            + _shifted(v, (-1, -1))
            - _shifted(v, (1, -1))
            - _shifted(v, (-1, 1))
        ) / (4.0 * h * h)
    return grads, hess_diag, cross


def mse_residual(u: GridFunction) -> GridFunction:
    """Residual field of the graph operator at interior nodes."""
    grads, hess_diag, cross = _operator_terms(u)
    if u.base_dim == 1:
        res = hess_diag[0].copy()
    else:
        g1, g2 = grads
        h11, h22 = hess_diag
        h12 = cross
        t = 1.0 + g1 * g1 + g2 * g2
        res = t * (h11 + h22) - (g1 * g1 * h11 + 2.0 * g1 * g2 * h12 + g2 * g2 * h22)
    res[~u.interior()] = np.nan
    return u.with_values(res)


def _interior_index_map(f: GridFunction):
    interior = f.interior()
    idx = np.full(f.values.shape, -1, dtype=np.int64)
    order = np.argwhere(interior)
    idx[tuple(order.T)] = np.arange(len(order))
    return idx, order


def _check_boundary_complete(boundary: GridFunction):
    ring = boundary.boundary()
    if not np.all(np.isfinite(boundary.values[ring])):
        raise ValueError("boundary trace is incomplete on the ring")


def _harmonic_extension(boundary: GridFunction) -> np.ndarray:
    """Solve the five/three-point Laplace system for the initial Newton guess."""
    idx, order = _interior_index_map(boundary)
    n = len(order)
    vals = np.where(boundary.boundary(), boundary.values, 0.0)
    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    d = boundary.base_dim
    offsets = []
    for a in range(d):
        offsets.append(tuple(1 if i == a else 0 for i in range(d)))
        offsets.append(tuple(-1 if i == a else 0 for i in range(d)))
    rows_center = np.arange(n)
    rows.append(rows_center)
    cols.append(rows_center)
    data.append(np.full(n, -2.0 * d))
    for off in offsets:
        nbr = order + np.asarray(off)
        nbr_idx = idx[tuple(nbr.T)]
        is_unknown = nbr_idx >= 0
        rows.append(rows_center[is_unknown])
        cols.append(nbr_idx[is_unknown])
        data.append(np.ones(is_unknown.sum()))
        bnodes = nbr[~is_unknown]
        rhs_add = np.zeros(n)
        rhs_add[rows_center[~is_unknown]] = -vals[tuple(bnodes.T)]
        rhs += rhs_add
    mat = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    sol = spla.spsolve(mat, rhs)
    out = np.where(boundary.boundary(), boundary.values, np.nan)
    out[tuple(order.T)] = sol
    return out


def _assemble_jacobian(u: GridFunction, idx: np.ndarray, order: np.ndarray) -> sp.csr_matrix:
    h = u.h
    d = u.base_dim
    n = len(order)
    rows_center = np.arange(n)
    pts = tuple(order.T)
    if d == 1:
        entries = {(0,): np.full(n, -2.0 / (h * h))}
        for off in ((1,), (-1,)):
            entries[off] = np.full(n, 1.0 / (h * h))
    else:
        grads, hess_diag, cross = _operator_terms(u)
        g1, g2 = grads[0][pts], grads[1][pts]
        h11, h22 = hess_diag[0][pts], hess_diag[1][pts]
        h12 = cross[pts]
        t = 1.0 + g1 * g1 + g2 * g2
        dF_g1 = 2.0 * g1 * (h11 + h22) - 2.0 * (g1 * h11 + g2 * h12)
        dF_g2 = 2.0 * g2 * (h11 + h22) - 2.0 * (g1 * h12 + g2 * h22)
        dF_h11 = t - g1 * g1
        dF_h22 = t - g2 * g2
        dF_h12 = -2.0 * g1 * g2
        inv2h = 1.0 / (2.0 * h)
        invh2 = 1.0 / (h * h)
        inv4h2 = 1.0 / (4.0 * h * h)
        entries = {
            (0, 0): -2.0 * invh2 * (dF_h11 + dF_h22),
            (1, 0): dF_g1 * inv2h + dF_h11 * invh2,
            (-1, 0): -dF_g1 * inv2h + dF_h11 * invh2,
            (0, 1): dF_g2 * inv2h + dF_h22 * invh2,
            (0, -1): -dF_g2 * inv2h + dF_h22 * invh2,
            (1, 1): dF_h12 * inv4h2,
            (-1, -1): dF_h12 * inv4h2,
            (1, -1): -dF_h12 * inv4h2,
            (-1, 1): -dF_h12 * inv4h2,
        }
    rows, cols, data = [], [], []
    for off, coeff in entries.items():
        nbr = order + np.asarray(off)
        nbr_idx = idx[tuple(nbr.T)]
        keep = nbr_idx >= 0
        rows.append(rows_center[keep])
        cols.append(nbr_idx[keep])
        data.append(np.asarray(coeff)[keep] if np.ndim(coeff) else np.full(keep.sum(), coeff))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def _residual_sup(u: GridFunction) -> float:
    res = mse_residual(u).values
    res = res[np.isfinite(res)]
    return float(np.max(np.abs(res))) if len(res) else 0.0


def solve_mse(
    boundary: GridFunction,
    tol: float | None = None,
    max_iter: int = 50,
    initial: GridFunction | None = None,
) -> MseSolution:
    """Solve the Dirichlet problem for the graph operator.

    ``boundary`` supplies Dirichlet data on its ring; interior values are
    ignored.  Default tolerance is ``1e-10 * (1 + osc(boundary))`` on the
    sup-norm of the residual, which is re-checked independently after
    convergence.
    """
    _check_boundary_complete(boundary)
    ring_vals = boundary.values[boundary.boundary()]
    osc = float(np.max(ring_vals) - np.min(ring_vals))
    if tol is None:
        tol = 1e-10 * (1.0 + osc)
    idx, order = _interior_index_map(boundary)
    if initial is not None:
        vals = initial.values.copy()
        vals[boundary.boundary()] = boundary.values[boundary.boundary()]
    else:
        vals = _harmonic_extension(boundary)
    u = boundary.with_values(vals)
    res_sup = _residual_sup(u)
    iterations = 0
    while res_sup > tol and iterations < max_iter:
        res_field = mse_residual(u).values
        rhs = -res_field[tuple(order.T)]
        jac = _assemble_jacobian(u, idx, order)
        delta = spla.spsolve(jac, rhs)
        step = 1.0
        improved = False
        while step >= 2.0**-30:
            trial = u.values.copy()
            trial[tuple(order.T)] += step * delta
            u_try = boundary.with_values(trial)
            try_sup = _residual_sup(u_try)
            if try_sup < res_sup or try_sup <= tol:
                u, res_sup = u_try, try_sup
                improved = True
                break
            step *= 0.5
        iterations += 1
        if not improved:
            break
    if res_sup > tol:
        raise ConvergenceError(
            f"no convergence after {iterations} iterations "
            f"(last sup-norm residual {res_sup:.3e}, tol {tol:.3e})",
            residual_sup=res_sup,
        )
    final_sup = _residual_sup(u)  # independent re-check of the returned field
    return MseSolution(u=u, residual_sup=final_sup, iterations=iterations, tol=tol)


def exact_solution(
    kind: str,
    base_dim: int = 2,
    radius: float = 1.0,
    resolution: int = 129,
    a=None,
    c: float = 0.0,
    scale: float = 1.0,
    grid: GridFunction | None = None,
) -> GridFunction:
    """Catalogue of exact graphs: ``affine`` (slope a, offset c) and ``scherk``.

    The saddle surface ``scale * log(cos(x1/scale) / cos(x2/scale))`` solves
    the graph operator exactly; its domain must keep ``radius/scale`` below
    1.45 so the cosines stay away from zero.
    """
    if grid is None:
        grid = make_grid(base_dim, radius, resolution)
    if kind == "affine":
        slope = np.zeros(grid.base_dim) if a is None else np.asarray(a, dtype=float)
        if slope.shape != (grid.base_dim,):
            raise ValueError("affine slope has wrong dimension")
        if grid.base_dim == 1:
            return from_function(grid, lambda x: slope[0] * x + c)
        return from_function(grid, lambda x, y: slope[0] * x + slope[1] * y + c)
    if kind == "scherk":
        if grid.base_dim != 2:
            raise ValueError("the saddle surface needs a two-dimensional base")
        if grid.radius / scale > SCHERK_MAX_STRETCH:
            raise ValueError(
                f"radius/scale = {grid.radius / scale:.3f} exceeds the safe "
                f"subdomain cap {SCHERK_MAX_STRETCH}"
            )
        return from_function(
            grid,
            lambda x, y: scale * (np.log(np.cos(x / scale)) - np.log(np.cos(y / scale))),
        )
    raise ValueError(f"unknown exact solution kind {kind!r}")


def preset_boundary(
    grid: GridFunction,
    name: str,
    eps: float,
    q: float = 0.12,
    tilt=None,
    amp: float = 0.0,
    seed: int = 0,
) -> GridFunction:
    """Boundary-data presets for manufacturing flat minimal graphs.

    All presets except ``scherk`` scale with ``eps`` so the solved graph sits
    in the slab ``|height| <= eps``:

    * ``plane``   -- tilt . x
    * ``saddle``  -- eps * (q*(x1^2 - x2^2) + tilt . x)
    * ``bump``    -- saddle plus a seeded low-frequency cosine perturbation
    * ``scherk``  -- trace of the exact saddle surface (no eps scaling)
    """
    d = grid.base_dim
    tilt_vec = np.zeros(d) if tilt is None else np.asarray(tilt, dtype=float)

    def saddle(*xs):
        if d == 1:
            shape = q * (xs[0] ** 2)
        else:
            shape = q * (xs[0] ** 2 - xs[1] ** 2)
        lin = sum(t * x for t, x in zip(tilt_vec, xs))
        return shape + lin

    if name == "plane":
        return from_function(grid, lambda *xs: sum(t * x for t, x in zip(tilt_vec, xs)))
    if name == "saddle":
        return from_function(grid, lambda *xs: eps * saddle(*xs))
    if name == "bump":
        rng = np.random.default_rng(seed)
        coef = rng.uniform(-1.0, 1.0, size=(2, d))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=2)

        def g(*xs):
            wave = sum(
                np.cos(sum(2.0 * coef[m, a] * xs[a] for a in range(d)) + phase[m])
                for m in range(2)
            )
            return eps * (saddle(*xs) + amp * wave)

        return from_function(grid, g)
    if name == "scherk":
        return exact_solution("scherk", grid=grid)
    raise ValueError(f"unknown boundary preset {name!r}")


def _mse_operator_at(phi: GridFunction, p: tuple[int, ...]) -> float:
    g = gradient(phi, p)
    H = hessian(phi, p)
    return float((1.0 + g @ g) * np.trace(H) - g @ H @ g)


def viscosity_touch_check(
    surface: GridFunction,
    phi: GridFunction,
    side: str,
    touch_point,
    touch_tol: float | None = None,
    op_tol: float = 1e-8,
) -> ViscosityVerdict:
    """One-sided touching test against the graph's region.

    ``side='below'`` runs the sub-graph case (test function below the graph,
    contained in the region under it): the operator on the test function must
    be ``<= op_tol``.  ``side='above'`` runs the super-graph case, requiring
    ``>= -op_tol``.  The one-sidedness hypothesis is verified over the whole
    common node set and its violation raises ``ValueError``.
    """
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    if surface.values.shape != phi.values.shape or surface.h != phi.h:
        raise ValueError("surface and test function must share one grid layout")
    if isinstance(touch_point, tuple) and all(isinstance(i, (int, np.integer)) for i in touch_point):
        p = tuple(int(i) for i in touch_point)
    else:
        p = tuple(int(round(c / surface.h)) + surface.k for c in np.atleast_1d(touch_point))
    if touch_tol is None:
        finite = surface.values[np.isfinite(surface.values)]
        scale = 1.0 + (float(np.max(np.abs(finite))) if len(finite) else 0.0)
        touch_tol = 1e-9 * scale
    common = surface.covered() & phi.covered()
    if not common[p]:
        raise ValueError("touch point is not a covered node of both fields")
    gap = phi.values - surface.values
    if abs(gap[p]) > touch_tol:
        raise ValueError(f"no touching at {p}: gap {gap[p]:.3e} exceeds {touch_tol:.3e}")
    gaps = gap[common]
    if side == "above":
        if float(np.min(gaps)) < -touch_tol:
            raise ValueError("touching hypothesis violated: test function dips below")
        containment = "E^c"
    else:
        if float(np.max(gaps)) > touch_tol:
            raise ValueError("touching hypothesis violated: test function rises above")
        containment = "E"
    if phi.mask[p] != INTERIOR:
        raise ValueError("touch point must be interior for the operator stencil")
    value = _mse_operator_at(phi, p)
    satisfied = value <= op_tol if side == "below" else value >= -op_tol
    return ViscosityVerdict(
        side=side,
        containment=containment,
        operator_value=value,
        satisfied=satisfied,
        touch_index=p,
    )
