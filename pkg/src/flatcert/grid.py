"""Uniform-grid scalar fields over balls in the flat base, plus measurement primitives.

A :class:`GridFunction` samples a scalar field at the nodes ``(i - K) * h``
of a cube lattice, restricted to the closed ball of a given radius centred at
the origin (node-centre rasterization).  Nodes inside the ball whose full
box neighbourhood stays inside are *interior* (all centred second-order
stencils are available there); the remaining inside nodes form the *boundary*
ring and carry Dirichlet data.

Pair scans (oscillation, Hoelder seminorm) and the argmin scans built on this
module share one distance formula, ``sqrt(sum(d_k * d_k))``, so that blocked
NumPy evaluation and plain-loop reference evaluation agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EXTERIOR",
    "BOUNDARY",
    "INTERIOR",
    "GridFunction",
    "HolderEstimate",
    "make_grid",
    "from_function",
    "boundary_trace",
    "restrict",
    "oscillation",
    "holder_seminorm",
    "laplacian",
    "gradient",
    "hessian",
    "refine_local",
    "write_gf1",
    "read_gf1",
]

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2

_RADIUS_RTOL = 1e-12


def _inside_mask(base_dim: int, k: int, h: float, radius: float) -> np.ndarray:
    axis = (np.arange(2 * k + 1) - k) * h
    if base_dim == 1:
        dist2 = axis * axis
    else:
        dist2 = axis[:, None] ** 2 + axis[None, :] ** 2
    return dist2 <= radius * radius * (1 + _RADIUS_RTOL)


def _classify(base_dim: int, k: int, h: float, radius: float) -> np.ndarray:
    inside = _inside_mask(base_dim, k, h, radius)
    interior = inside.copy()
    # interior requires the full box neighbourhood (3**d stencil) inside
    offsets = (
        [(-1,), (1,)]
        if base_dim == 1
        else [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    )
    padded = np.zeros(tuple(s + 2 for s in inside.shape), dtype=bool)
    core = tuple(slice(1, -1) for _ in range(base_dim))
    padded[core] = inside
    for off in offsets:
        sl = tuple(slice(1 + o, s + 1 + o) for o, s in zip(off, inside.shape))
        interior &= padded[sl]
    mask = np.zeros(inside.shape, dtype=np.int8)
    mask[inside] = BOUNDARY
    mask[interior] = INTERIOR
    return mask


@dataclass(frozen=True)
class GridFunction:
    """Scalar samples over the ball; immutable after construction."""

    base_dim: int
    radius: float
    h: float
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.base_dim not in (1, 2):
            raise ValueError(f"base_dim must be 1 or 2, got {self.base_dim}")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if self.values.shape != self.mask.shape:
            raise ValueError("values/mask shape mismatch")
        if any(s % 2 == 0 for s in self.values.shape):
            raise ValueError("grids must have odd extent so the origin is a node")
        self.values.setflags(write=False)
        self.mask.setflags(write=False)

    @property
    def k(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def axis_coords(self) -> np.ndarray:
        return (np.arange(self.resolution) - self.k) * self.h

    def coords(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to the full shape."""
        axis = self.axis_coords()
        if self.base_dim == 1:
            return [axis]
        return [np.broadcast_to(axis[:, None], self.values.shape),
                np.broadcast_to(axis[None, :], self.values.shape)]

    def inside(self) -> np.ndarray:
        return self.mask != EXTERIOR

    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    def boundary(self) -> np.ndarray:
        return self.mask == BOUNDARY

    def covered(self) -> np.ndarray:
        return self.inside() & np.isfinite(self.values)

    def node_coord(self, idx: tuple[int, ...]) -> np.ndarray:
        return (np.asarray(idx, dtype=float) - self.k) * self.h

    def origin_index(self) -> tuple[int, ...]:
        return (self.k,) * self.base_dim

    def with_values(self, values: np.ndarray) -> "GridFunction":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("replacement values have wrong shape")
        out = values.copy()
        out[~self.inside()] = np.nan
        return GridFunction(self.base_dim, self.radius, self.h, out, self.mask.copy())


def make_grid(base_dim: int, radius: float, resolution: int) -> GridFunction:
    """Empty (NaN-valued) grid layout; ``resolution`` is nodes per diameter (odd)."""
    if base_dim not in (1, 2):
        raise ValueError(f"base_dim must be 1 or 2, got {base_dim}")
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError(f"resolution must be odd and >= 3, got {resolution}")
    k = (resolution - 1) // 2
    h = radius / k
    mask = _classify(base_dim, k, h, radius)
    values = np.full(mask.shape, np.nan)
    return GridFunction(base_dim, radius, h, values, mask)


def from_function(grid: GridFunction, fn) -> GridFunction:
    """Sample ``fn`` (vectorized over coordinate arrays) at every inside node."""
    coords = grid.coords()
    sampled = np.asarray(fn(*coords), dtype=float)
    sampled = np.broadcast_to(sampled, grid.values.shape).copy()
    sampled[~grid.inside()] = np.nan
    return grid.with_values(sampled)


def boundary_trace(f: GridFunction) -> GridFunction:
    """Keep values on the boundary ring only; interior becomes NaN."""
    vals = np.where(f.boundary(), f.values, np.nan)
    return GridFunction(f.base_dim, f.radius, f.h, vals, f.mask.copy())


def restrict(f: GridFunction, new_radius: float) -> GridFunction:
    """Central sub-grid of radius ``new_radius`` with the same spacing."""
    if new_radius > f.radius * (1 + _RADIUS_RTOL):
        raise ValueError("cannot restrict to a larger radius")
    k_new = int(math.floor(new_radius / f.h + 1e-9))
    if k_new < 1:
        raise ValueError("restriction radius below grid spacing")
    k = f.k
    sl = tuple(slice(k - k_new, k + k_new + 1) for _ in range(f.base_dim))
    mask = _classify(f.base_dim, k_new, f.h, new_radius)
    values = f.values[sl].copy()
    values[mask == EXTERIOR] = np.nan
    return GridFunction(f.base_dim, new_radius, f.h, values, mask)


def covered_nodes(f: GridFunction, center=None, r: float | None = None):
    """(indices, coords, values) of covered nodes, optionally inside a ball."""
    sel = f.covered()
    idx = np.argwhere(sel)
    coords = (idx - f.k) * f.h
    if r is not None:
        center = np.zeros(f.base_dim) if center is None else np.asarray(center, dtype=float)
        d2 = np.zeros(len(idx))
        for a in range(f.base_dim):
            d = coords[:, a] - center[a]
            d2 += d * d
        keep = d2 <= r * r * (1 + _RADIUS_RTOL)
        idx, coords = idx[keep], coords[keep]
    vals = f.values[tuple(idx.T)] if len(idx) else np.empty(0)
    return idx, coords, vals


def oscillation(f: GridFunction, center=None, r: float | None = None) -> float:
    """max - min of the samples over the nodes of the ball ``B_r(center)``."""
    if r is None:
        r = f.radius
    _, _, vals = covered_nodes(f, center, r)
    if len(vals) == 0:
        raise ValueError("oscillation over an empty node set")
    return float(np.max(vals) - np.min(vals))


@dataclass(frozen=True)
class HolderEstimate:
    """Pair-scan seminorm with its grid-quantization allowance.

    ``quantization_bound`` estimates how much the node-pair sup may undershoot
    the continuum seminorm: modulus-of-continuity estimate times ``h**sigma``.
    """

    value: float
    quantization_bound: float
    n_nodes: int
    n_pairs: int


def holder_seminorm(
    f: GridFunction,
    sigma: float,
    center=None,
    r: float | None = None,
    block: int = 256,
) -> HolderEstimate:
    """sup over distinct node pairs of ``|f(x)-f(y)| / |x-y|**sigma``."""
    if not 0 < sigma <= 1:
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")
    _, coords, vals = covered_nodes(f, center, r)
    n = len(vals)
    if n < 2:
        raise ValueError("Hoelder seminorm needs at least two nodes")
    best = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        dist2 = np.zeros((stop - start, n))
        for a in range(f.base_dim):
            d = coords[start:stop, a:a + 1] - coords[None, :, a]
            dist2 += d * d
        num = np.abs(vals[start:stop, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = num / np.sqrt(dist2) ** sigma
        ratio[dist2 == 0.0] = -np.inf
        m = float(np.max(ratio))
        if m > best:
            best = m
    return HolderEstimate(
        value=best,
        quantization_bound=best * f.h**sigma,
        n_nodes=n,
        n_pairs=n * (n - 1) // 2,
    )


def _shifted(values: np.ndarray, offset: tuple[int, ...]) -> np.ndarray:
    """values translated by -offset, NaN-filled at the vacated rim."""
    out = np.full_like(values, np.nan)
    src = []
    dst = []
    for o, s in zip(offset, values.shape):
        if o >= 0:
            src.append(slice(o, s))
            dst.append(slice(0, s - o))
        else:
            src.append(slice(0, s + o))
            dst.append(slice(-o, s))
    out[tuple(dst)] = values[tuple(src)]
    return out


def laplacian(f: GridFunction) -> GridFunction:
    """Centred five/three-point Laplacian; NaN off the interior."""
    h2 = f.h * f.h
    acc = np.zeros_like(f.values)
    for a in range(f.base_dim):
        plus = _shifted(f.values, tuple(1 if i == a else 0 for i in range(f.base_dim)))
        minus = _shifted(f.values, tuple(-1 if i == a else 0 for i in range(f.base_dim)))
        acc = acc + (plus - 2.0 * f.values + minus) / h2
    acc[~f.interior()] = np.nan
    return f.with_values(acc)


def _require_interior(f: GridFunction, p: tuple[int, ...]):
    if f.mask[p] != INTERIOR:
        raise ValueError(f"node {p} is not interior")


def gradient(f: GridFunction, p: tuple[int, ...]) -> np.ndarray:
    """Centred first differences at an interior node; exact on quadratics."""
    p = tuple(int(i) for i in p)
    _require_interior(f, p)
    g = np.empty(f.base_dim)
    for a in range(f.base_dim):
        up = list(p)
        dn = list(p)
        up[a] += 1
        dn[a] -= 1
        g[a] = (f.values[tuple(up)] - f.values[tuple(dn)]) / (2.0 * f.h)
    return g


def hessian(f: GridFunction, p: tuple[int, ...]) -> np.ndarray:
    """Centred second differences at an interior node; exact on quadratics."""
    p = tuple(int(i) for i in p)
    _require_interior(f, p)
    h2 = f.h * f.h
    H = np.empty((f.base_dim, f.base_dim))
    for a in range(f.base_dim):
        up = list(p)
        dn = list(p)
        up[a] += 1
        dn[a] -= 1
        H[a, a] = (f.values[tuple(up)] - 2.0 * f.values[p] + f.values[tuple(dn)]) / h2
    if f.base_dim == 2:
        i, j = p
        cross = (
            f.values[i + 1, j + 1]
            + f.values[i - 1, j - 1]
            - f.values[i + 1, j - 1]
            - f.values[i - 1, j + 1]
        ) / (4.0 * h2)
        H[0, 1] = H[1, 0] = cross
    return H


def refine_local(f: GridFunction, radius: float, factor: int) -> GridFunction:
    """Origin-centred refinement hook: sub-ball grid at spacing ``h / factor``.

    Values are filled by multilinear interpolation of the coarse field; every
    interpolation cell must be fully covered on the coarse grid.
    """
    if factor < 2:
        raise ValueError("refinement factor must be >= 2")
    if radius >= f.radius:
        raise ValueError("refinement region must be strictly inside the domain")
    h_new = f.h / factor
    k_new = int(math.floor(radius / h_new + 1e-9))
    fine = GridFunction(
        f.base_dim,
        radius,
        h_new,
        np.full((2 * k_new + 1,) * f.base_dim, np.nan),
        _classify(f.base_dim, k_new, h_new, radius),
    )
    idx = np.argwhere(fine.inside())
    pts = (idx - k_new) * h_new
    rel = pts / f.h + f.k
    base = np.floor(rel).astype(int)
    frac = rel - base
    vals = np.zeros(len(idx))
    if f.base_dim == 1:
        i0 = base[:, 0]
        v0, v1 = f.values[i0], f.values[i0 + 1]
        vals = v0 * (1 - frac[:, 0]) + v1 * frac[:, 0]
    else:
        i0, j0 = base[:, 0], base[:, 1]
        fx, fy = frac[:, 0], frac[:, 1]
        v00 = f.values[i0, j0]
        v10 = f.values[i0 + 1, j0]
        v01 = f.values[i0, j0 + 1]
        v11 = f.values[i0 + 1, j0 + 1]
        vals = (
            v00 * (1 - fx) * (1 - fy)
            + v10 * fx * (1 - fy)
            + v01 * (1 - fx) * fy
            + v11 * fx * fy
        )
    if not np.all(np.isfinite(vals)):
        raise ValueError("refinement region not fully covered by the coarse field")
    out = np.full(fine.values.shape, np.nan)
    out[tuple(idx.T)] = vals
    return fine.with_values(out)


def write_gf1(f: GridFunction, path) -> None:
    """Write the text format: header then one sample per line, row-major."""
    lines = [
        "gf1",
        f"basedim {f.base_dim}",
        f"radius {float(f.radius)!r}",
        f"h {float(f.h)!r}",
    ]
    flat = f.values.ravel()
    lines.extend("nan" if not np.isfinite(v) else repr(float(v)) for v in flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_gf1(path) -> GridFunction:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != "gf1":
        raise ValueError(f"{path}: not a gf1 file")
    header = {}
    for line in lines[1:4]:
        key, _, value = line.partition(" ")
        header[key] = value
    base_dim = int(header["basedim"])
    radius = float(header["radius"])
    h = float(header["h"])
    k = int(round(radius / h))
    shape = (2 * k + 1,) * base_dim
    body = lines[4:]
    expected = int(np.prod(shape))
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} samples, found {len(body)}")
    values = np.array([float(tok) for tok in body]).reshape(shape)
    mask = _classify(base_dim, k, h, radius)
    values[mask == EXTERIOR] = np.nan
    return GridFunction(base_dim, radius, h, values, mask)
