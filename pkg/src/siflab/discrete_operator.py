"""Monotone-style min/max finite differences for the infinity Laplacian.

At a node with value u the steepest ascent and descent along the lattice
directions give one-sided slopes

    D+ = (M - u)/len_M,    D- = (u - m)/len_m,

and the operator is ``((D+ - D-)/ℓ) · D+ · D-`` with ℓ = (len_M + len_m)/2:
a centred second difference along the extremal directions times a product
estimate of |Du|².  In 1D this is the classical three-point scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from siflab.model import ProblemParams, rhs

GEOMETRIES = ("box", "disk")


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Symmetric set of lattice offsets, sorted lexicographically."""

    offsets: np.ndarray
    lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=int)
        if off.ndim != 2 or off.shape[0] == 0:
            raise GridError("offsets must be a non-empty (k, dim) array")
        order = sorted(range(len(off)), key=lambda i: tuple(off[i]))
        off = off[order]
        keys = {tuple(v) for v in off}
        if len(keys) != len(off) or (0,) * off.shape[1] in keys:
            raise GridError("offsets must be distinct and nonzero")
        if any(tuple(-v) not in keys for v in off):
            raise GridError("direction set must be symmetric under v -> -v")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "lengths", np.sqrt((off**2).sum(axis=1).astype(float)))

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    @property
    def reach(self) -> int:
        return int(np.abs(self.offsets).max())

    def __len__(self):
        return len(self.offsets)


def direction_set(dim: int, ring: int = 8) -> DirectionSet:
    """{±1} in 1D; the 8 king moves, or 16 with the knight moves, in 2D."""
    if dim == 1:
        return DirectionSet(np.array([[-1], [1]]))
    if dim != 2:
        raise GridError(f"dim must be 1 or 2, got {dim}")
    offs = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    if ring == 16:
        offs += [(a * i, b * j) for (i, j) in ((1, 2), (2, 1)) for a in (-1, 1) for b in (-1, 1)]
    elif ring != 8:
        raise GridError(f"2D ring must be 8 or 16, got {ring}")
    return DirectionSet(np.array(offs))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice over [-R, R]^dim with node i at -R + i·h per axis.

    ``boundary_mask`` flags the Dirichlet carriers: the outer ``reach``
    layers for a box, everything with |x| >= R (plus the outer layers)
    for a disk.
    """

    dim: int
    R: float
    h: float
    n: int
    geometry: str
    reach: int
    boundary_mask: np.ndarray

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple:
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    def points(self) -> np.ndarray:
        return np.stack([c.ravel() for c in self.coords], axis=1)

    def dist_to_boundary(self) -> np.ndarray:
        """Distance from each node to ∂Ω (the box faces or the circle)."""
        if self.geometry == "disk":
            return np.maximum(self.R - self.radius, 0.0)
        return np.maximum(self.R - np.max(np.abs(np.stack(self.coords)), axis=0), 0.0)

    def index_of(self, point) -> tuple:
        """Nearest node index to a physical point."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = np.rint((point + self.R) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n):
            raise GridError(f"point {point} lies outside the grid")
        return tuple(int(i) for i in idx)

    def center_index(self) -> tuple:
        return self.index_of(np.zeros(self.dim))

    def flat(self, index) -> int:
        return int(np.ravel_multi_index(tuple(index), self.shape))

    def unflat(self, k: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(k, self.shape))

    def describe(self) -> dict:
        return {"dim": self.dim, "R": self.R, "h": self.h, "n": self.n, "geometry": self.geometry}


def make_grid(dim: int, R: float, h: float, geometry: str = "box", reach: int = 1) -> Grid:
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if geometry not in GEOMETRIES:
        raise GridError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    if dim == 1 and geometry == "disk":
        geometry = "box"
    if not (R > 0 and h > 0):
        raise GridError("R and h must be positive")
    cells = 2.0 * R / h
    m = int(round(cells))
    if m < 2 * reach + 2 or abs(cells - m) > 1e-9 * max(1.0, cells):
        raise GridError(f"2R/h must be an integer >= {2 * reach + 2}, got {cells}")
    n = m + 1
    idx = np.indices((n,) * dim)
    edge = np.zeros((n,) * dim, dtype=bool)
    for ax in idx:
        edge |= (ax < reach) | (ax > n - 1 - reach)
    grid = Grid(dim=dim, R=float(R), h=float(h), n=n, geometry=geometry, reach=reach, boundary_mask=edge)
    if geometry == "disk":
        mask = edge | (grid.radius >= R - 1e-12 * R)
        grid = Grid(dim=dim, R=float(R), h=float(h), n=n, geometry=geometry, reach=reach, boundary_mask=mask)
    return grid


def grid_for(dim: int, R: float, h: float, geometry: str, dirs: DirectionSet) -> Grid:
    return make_grid(dim, R, h, geometry, reach=dirs.reach)


@dataclass(eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        self.values = v

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(*grid.coords))


@dataclass(frozen=True, eq=False)
class Stencil:
    """Neighbor bookkeeping for a node subset: ``nbr[k, j]`` is the flat index
    of node ``nodes[j]`` shifted by offset k."""

    grid: Grid
    dirs: DirectionSet
    nodes: np.ndarray
    nbr: np.ndarray
    step: np.ndarray  # physical length of each offset


def build_stencil(grid: Grid, dirs: DirectionSet, nodes: np.ndarray | None = None) -> Stencil:
    if dirs.dim != grid.dim:
        raise GridError("direction set and grid dimensions differ")
    if nodes is None:
        nodes = np.flatnonzero(grid.interior_mask.ravel())
    nodes = np.asarray(nodes, dtype=np.int64)
    multi = np.array(np.unravel_index(nodes, grid.shape))
    nbr = np.empty((len(dirs), nodes.size), dtype=np.int64)
    for k, off in enumerate(dirs.offsets):
        shifted = multi + off[:, None]
        if np.any(shifted < 0) or np.any(shifted >= grid.n):
            raise GridError(f"offset {tuple(off)} leaves the grid from a requested node")
        nbr[k] = np.ravel_multi_index(tuple(shifted), grid.shape)
    return Stencil(grid=grid, dirs=dirs, nodes=nodes, nbr=nbr, step=dirs.lengths * grid.h)


@dataclass
class StencilEval:
    """Operator value and the extremal-direction choice at each stencil node."""

    L: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    k_max: np.ndarray
    k_min: np.ndarray
    len_max: np.ndarray
    len_min: np.ndarray
    i_max: np.ndarray
    i_min: np.ndarray


def evaluate(st: Stencil, u_flat: np.ndarray) -> StencilEval:
    uc = u_flat[st.nodes]
    slopes = (u_flat[st.nbr] - uc) / st.step[:, None]
    # argmax/argmin return the first hit: the lexicographically smallest offset
    kmax = np.argmax(slopes, axis=0)
    kmin = np.argmin(slopes, axis=0)
    cols = np.arange(st.nodes.size)
    dp = slopes[kmax, cols]
    dm = -slopes[kmin, cols]
    lM = st.step[kmax]
    lm = st.step[kmin]
    ell = 0.5 * (lM + lm)
    L = (dp - dm) / ell * dp * dm
    return StencilEval(L, dp, dm, kmax, kmin, lM, lm, st.nbr[kmax, cols], st.nbr[kmin, cols])


def _require_interior(f: Field, node, dirs: DirectionSet) -> int:
    g = f.grid
    idx = tuple(np.atleast_1d(node))
    if len(idx) != g.dim or any(not 0 <= i < g.n for i in idx):
        raise GridError(f"node {node} is not a grid node")
    if not g.interior_mask[idx]:
        raise GridError(f"node {idx} is not an interior node")
    return g.flat(idx)


def local_extrema(f: Field, node, dirs: DirectionSet):
    """(M, m, len_M, len_m) for the steepest ascent/descent neighbors of ``node``.

    Directions are ranked by slope (value difference over step length), so
    diagonal and axial neighbors compete fairly.
    """
    k = _require_interior(f, node, dirs)
    st = build_stencil(f.grid, dirs, np.array([k]))
    ev = evaluate(st, f.values.ravel())
    u = f.values.ravel()
    return (
        float(u[ev.i_max[0]]),
        float(u[ev.i_min[0]]),
        float(ev.len_max[0]),
        float(ev.len_min[0]),
    )


def discrete_inf_laplacian(f: Field, node, dirs: DirectionSet) -> float:
    k = _require_interior(f, node, dirs)
    st = build_stencil(f.grid, dirs, np.array([k]))
    return float(evaluate(st, f.values.ravel()).L[0])


def apply_operator(f: Field, dirs: DirectionSet, stencil: Stencil | None = None) -> Field:
    """Discrete Δ∞ at every interior node; zero on boundary nodes."""
    st = stencil or build_stencil(f.grid, dirs)
    out = np.zeros(f.grid.size)
    out[st.nodes] = evaluate(st, f.values.ravel()).L
    return Field(f.grid, out.reshape(f.grid.shape))


def residual_field(
    f: Field,
    p: ProblemParams | None,
    dirs: DirectionSet,
    stencil: Stencil | None = None,
    fixed: np.ndarray | None = None,
) -> Field:
    """L_h f - B_ε(f) f^(-γ) at interior nodes, 0 on boundary (and ``fixed``) nodes.

    ``p=None`` drops the right-hand side (the infinity-harmonic residual).
    Negative values are clamped to 0 before the right-hand side is taken.
    """
    st = stencil or build_stencil(f.grid, dirs)
    u = f.values.ravel()
    r = np.zeros(f.grid.size)
    L = evaluate(st, u).L
    if p is not None:
        L = L - rhs(np.maximum(u[st.nodes], 0.0), p)
    r[st.nodes] = L
    if fixed is not None:
        r[np.asarray(fixed).ravel()] = 0.0
    return Field(f.grid, r.reshape(f.grid.shape))
