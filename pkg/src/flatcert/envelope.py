"""Stretched multivalued graphs and their regularization.

A flat surface trapped in the slab ``|height| <= eps`` is recorded as a
multivalued graph: per base node, the set of its heights divided by the
flatness.  The lower/upper envelopes bracket the surface; the regularizer
replaces the lower envelope by the largest function below it with modulus
``modulus_coeff' * |x - y|**alpha`` (an inf-convolution, computed by
exhaustive minimization over nodes), and the sandwich verifier measures how
tightly the envelopes hug the regularized function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import (
    GridFunction,
    covered_nodes,
    holder_seminorm,
    make_grid,
    read_gf1,
    restrict,
    write_gf1,
)
from .ledger import ConstantLedger

__all__ = [
    "MultiGraph",
    "InfConvolution",
    "SandwichReport",
    "SlabError",
    "extract_multigraph",
    "multigraph_from_graph",
    "inf_convolve",
    "inf_convolve_region",
    "verify_sandwich",
    "stretched_envelopes",
    "save_multigraph",
    "load_multigraph",
]

REGION_RADIUS = 0.75  # regularization happens on this sub-ball
NORM_RADIUS = 0.5  # the stretched-norm bound is measured on this one


class SlabError(ValueError):
    """Samples escape the flat slab required by the construction."""


def _norm2_rows(arr: np.ndarray) -> np.ndarray:
    """Row-wise squared norms with fixed left-to-right accumulation."""
    acc = arr[:, 0] * arr[:, 0]
    for a in range(1, arr.shape[1]):
        acc = acc + arr[:, a] * arr[:, a]
    return acc


@dataclass(frozen=True)
class MultiGraph:
    """Binned stretched heights with envelopes.

    ``columns`` maps node index tuples to sorted arrays of stretched heights
    (heights shifted so the lowest sheet at the origin is zero, then divided
    by ``eps``).  ``eps`` is the *effective* flatness ``eps_nominal + |shift|``
    under which the stretched values satisfy ``|A| <= 1``; ``lower``/``upper``
    hold absolute (unstretched, shifted) envelope heights.
    """

    eps: float
    eps_nominal: float
    shift: float
    lower: GridFunction
    upper: GridFunction
    columns: dict

    @property
    def base_dim(self) -> int:
        return self.lower.base_dim

    def covered(self) -> np.ndarray:
        return self.lower.covered()

    def single_valued(self) -> bool:
        return all(len(v) == 1 for v in self.columns.values())


def stretched_envelopes(mg: MultiGraph) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper envelope values divided by the effective flatness."""
    return mg.lower.values / mg.eps, mg.upper.values / mg.eps


def extract_multigraph(
    samples: np.ndarray,
    eps: float,
    base_dim: int | None = None,
    radius: float = 1.0,
    resolution: int = 129,
) -> MultiGraph:
    """Bin surface samples ``(x', height)`` to grid columns and normalize.

    Requires every height within ``eps`` in magnitude (the flat-slab
    hypothesis) and a nonempty column at the origin node.  The vertical shift
    making the lowest origin sheet zero is applied to all heights and
    reported; the effective flatness grows to at most twice the nominal one.
    Columns without samples are simply absent (their envelope nodes are NaN).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] < 2:
        raise ValueError("samples must be an (m, base_dim+1) array")
    if base_dim is None:
        base_dim = samples.shape[1] - 1
    if samples.shape[1] != base_dim + 1:
        raise ValueError("sample width does not match base_dim + 1")
    heights = samples[:, -1]
    max_h = float(np.max(np.abs(heights))) if len(heights) else 0.0
    if max_h > eps * (1 + 1e-9):
        raise SlabError(f"slab violation: |height| up to {max_h:.3e} exceeds eps={eps:.3e}")

    layout = make_grid(base_dim, radius, resolution)
    k, h = layout.k, layout.h
    idx = np.rint(samples[:, :base_dim] / h).astype(int) + k
    keep = np.all((idx >= 0) & (idx < layout.resolution), axis=1)
    idx, hts = idx[keep], heights[keep]
    inside = layout.inside()
    keep2 = inside[tuple(idx.T)]
    idx, hts = idx[keep2], hts[keep2]

    columns: dict = {}
    for node, value in zip(map(tuple, idx), hts):
        columns.setdefault(node, []).append(value)

    origin = layout.origin_index()
    if origin not in columns:
        raise ValueError("no sample column at the origin node")
    shift = float(min(columns[origin]))
    eps_eff = eps + abs(shift)

    lower_vals = np.full(layout.values.shape, np.nan)
    upper_vals = np.full(layout.values.shape, np.nan)
    shifted: dict = {}
    for node, vals in columns.items():
        arr = np.sort(np.asarray(vals) - shift)
        shifted[node] = arr / eps_eff
        lower_vals[node] = arr[0]
        upper_vals[node] = arr[-1]

    return MultiGraph(
        eps=eps_eff,
        eps_nominal=eps,
        shift=shift,
        lower=layout.with_values(lower_vals),
        upper=layout.with_values(upper_vals),
        columns=shifted,
    )


def multigraph_from_graph(u: GridFunction, eps: float) -> MultiGraph:
    """Single-valued multigraph from a height field (no re-binning)."""
    idx = np.argwhere(u.covered())
    coords = (idx - u.k) * u.h
    samples = np.column_stack([coords, u.values[tuple(idx.T)]])
    return extract_multigraph(samples, eps, u.base_dim, u.radius, u.resolution)


@dataclass(frozen=True)
class InfConvolution:
    """Regularized lower envelope with its certified modulus check."""

    u: GridFunction
    u_origin: float
    modulus: float
    modulus_measured: float
    modulus_ok: bool


def inf_convolve_region(
    source_coords: np.ndarray,
    source_vals: np.ndarray,
    target_coords: np.ndarray,
    coeff: float,
    alpha: float,
    block: int = 256,
) -> np.ndarray:
    """Exhaustive minimization of ``val + coeff * |x - t|**alpha`` per target.

    The arithmetic (squared distances summed per axis, one sqrt, one power)
    matches a plain double loop bit for bit.
    """
    n_t = len(target_coords)
    out = np.empty(n_t)
    dim = source_coords.shape[1]
    for start in range(0, n_t, block):
        stop = min(start + block, n_t)
        dist2 = np.zeros((stop - start, len(source_vals)))
        for a in range(dim):
            d = target_coords[start:stop, a:a + 1] - source_coords[None, :, a]
            dist2 += d * d
        cand = source_vals[None, :] + coeff * np.sqrt(dist2) ** alpha
        out[start:stop] = np.min(cand, axis=1)
    return out


def inf_convolve(mg: MultiGraph, ledger: ConstantLedger) -> InfConvolution:
    """Largest function with the certified modulus below the stretched lower envelope.

    Computed on the regularization sub-ball by exhaustive minimization over
    covered columns; afterwards the modulus bound (coefficient
    ``2**alpha * modulus_coeff``) is verified by a full pair scan.
    """
    if mg.lower.radius < REGION_RADIUS - 1e-12:
        raise ValueError("multigraph must cover the regularization sub-ball")
    alpha = float(ledger.alpha)
    coeff = ledger.modulus_coeff.to_float() * 2.0**alpha

    layout = mg.lower
    k, h = layout.k, layout.h
    sel = layout.covered()
    idx = np.argwhere(sel)
    coords = (idx - k) * h
    r2 = _norm2_rows(coords)
    in_region = r2 <= REGION_RADIUS * REGION_RADIUS * (1 + 1e-12)
    idx, coords = idx[in_region], coords[in_region]
    if len(idx) == 0:
        raise ValueError("no covered columns inside the regularization sub-ball")
    source_vals = layout.values[tuple(idx.T)] / mg.eps

    region = restrict(layout, REGION_RADIUS)
    k_new = region.k
    tgt_idx = np.argwhere(region.inside())
    tgt_coords = (tgt_idx - k_new) * h
    u_vals = inf_convolve_region(coords, source_vals, tgt_coords, coeff, alpha)
    full = np.full(region.values.shape, np.nan)
    full[tuple(tgt_idx.T)] = u_vals
    u = region.with_values(full)

    est = holder_seminorm(u, alpha)
    measured = est.value
    ok = measured <= coeff * (1 + 1e-9)
    return InfConvolution(
        u=u,
        u_origin=float(u.values[u.origin_index()]),
        modulus=coeff,
        modulus_measured=measured,
        modulus_ok=bool(ok),
    )


@dataclass(frozen=True)
class SandwichReport:
    """Margins of the envelope sandwich around the regularized function.

    Stretched margins are measured in height-over-eps units (they vanish
    exactly on single-valued fixed points); absolute margins are the same
    quantities times the effective flatness.  ``envelope_gap_*`` is the
    sup-distance between the stretched envelopes and the regularized
    function, compared against ``sandwich_gap * eps**(gamma*alpha)``;
    ``norm_*`` is the stretched sup+seminorm on the inner ball, compared
    against ``2**(6+5*alpha)``.
    """

    lower_margin_stretched: float
    upper_margin_stretched: float
    lower_margin: float
    upper_margin: float
    gap_bound_stretched: float
    envelope_gap_measured: float
    envelope_gap_bound: float
    norm_measured: float
    norm_bound: float
    ok_lower: bool
    ok_upper: bool
    ok_gap: bool
    ok_norm: bool

    @property
    def ok(self) -> bool:
        return self.ok_lower and self.ok_upper and self.ok_gap and self.ok_norm


def verify_sandwich(u: GridFunction, mg: MultiGraph, ledger: ConstantLedger) -> SandwichReport:
    """Check the two-sided envelope trap and the stretched norm bound.

    Negative margins yield a false verdict, never an exception.
    """
    alpha = float(ledger.alpha)
    ga = float(ledger.gamma * ledger.alpha)
    gap_st = ledger.eps_power("sandwich_gap", mg.eps, ga)

    k_u, k_m = u.k, mg.lower.k
    sel = mg.covered()
    idx = np.argwhere(sel)
    coords = (idx - k_m) * mg.lower.h
    r2 = _norm2_rows(coords)
    keep = r2 <= u.radius * u.radius * (1 + 1e-12)
    idx = idx[keep]
    idx_u = idx - (k_m - k_u)

    a_inf = mg.lower.values[tuple(idx.T)] / mg.eps
    a_sup = mg.upper.values[tuple(idx.T)] / mg.eps
    u_vals = u.values[tuple(idx_u.T)]

    lower_margin = float(np.min(a_inf - u_vals))
    upper_margin = float(np.min(u_vals + gap_st - a_sup))
    gap_measured = float(np.max(np.maximum(a_sup - u_vals, u_vals - a_inf)))

    inner = holder_seminorm(u, alpha, r=NORM_RADIUS)
    _, _, inner_vals = _covered_in_ball(u, NORM_RADIUS)
    norm = float(np.max(np.abs(inner_vals))) + inner.value
    norm_bound = 2.0 ** (6 + 5 * alpha)

    return SandwichReport(
        lower_margin_stretched=lower_margin,
        upper_margin_stretched=upper_margin,
        lower_margin=lower_margin * mg.eps,
        upper_margin=upper_margin * mg.eps,
        gap_bound_stretched=gap_st,
        envelope_gap_measured=gap_measured,
        envelope_gap_bound=gap_st,
        norm_measured=norm,
        norm_bound=norm_bound,
        ok_lower=bool(lower_margin >= 0.0),
        ok_upper=bool(upper_margin >= 0.0),
        ok_gap=bool(gap_measured <= gap_st),
        ok_norm=bool(norm <= norm_bound),
    )


def _covered_in_ball(f: GridFunction, r: float):
    return covered_nodes(f, None, r)


def save_multigraph(mg: MultiGraph, lower_path, upper_path, sidecar_path) -> None:
    """Serialize as a gf1 envelope pair plus a JSON sidecar with the scaling."""
    write_gf1(mg.lower, lower_path)
    write_gf1(mg.upper, upper_path)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {
                "eps": mg.eps,
                "eps_nominal": mg.eps_nominal,
                "shift": mg.shift,
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def load_multigraph(lower_path, upper_path, sidecar_path) -> MultiGraph:
    lower = read_gf1(lower_path)
    upper = read_gf1(upper_path)
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    columns = {}
    sel = np.argwhere(lower.covered())
    for node in map(tuple, sel):
        lo, hi = lower.values[node], upper.values[node]
        vals = np.array([lo]) if lo == hi else np.array([lo, hi])
        columns[node] = vals / meta["eps"]
    return MultiGraph(
        eps=float(meta["eps"]),
        eps_nominal=float(meta["eps_nominal"]),
        shift=float(meta["shift"]),
        lower=lower,
        upper=upper,
        columns=columns,
    )
