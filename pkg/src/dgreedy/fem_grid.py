"""Uniform rectangular grids on (0,1)^2 with continuous/discontinuous Q1 elements.

Assembly of all parameter-independent component matrices and right-hand
sides.  Quadrature is 2x2 Gauss per cell of the finer grid involved,
exact for products of bilinears on nested dyadic grids; cells cut by the
diagonal x = y are split into two triangles with a degree-2 rule.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigError, DataError, ShapeError

EDGES = ("left", "right", "bottom", "top")

# 2-point Gauss nodes on [0,1]
_G1 = 0.5 - 0.5 / np.sqrt(3.0)
_G2 = 0.5 + 0.5 / np.sqrt(3.0)
_GAUSS2 = (_G1, _G2)


class ComponentKind(NamedTuple):
    """Tag for a parameter-independent bilinear component."""

    tag: str
    edge: str | None = None


MASS = ComponentKind("mass")
STIFF = ComponentKind("stiff")
CONV_X = ComponentKind("conv_x")
CONV_Y = ComponentKind("conv_y")
ADJCONV_X = ComponentKind("adjconv_x")
ADJCONV_Y = ComponentKind("adjconv_y")
DX_DX = ComponentKind("dxdx")
DY_DY = ComponentKind("dydy")
DX_DY = ComponentKind("dxdy")
DY_DX = ComponentKind("dydx")


def edge_mass(edge):
    if edge not in EDGES:
        raise AssemblyError(f"unknown edge {edge!r}")
    return ComponentKind("edge_mass", edge)


@dataclass(frozen=True)
class Grid:
    """Uniform dyadic grid on (0,1)^2 with 4^level cells."""

    level: int

    def __post_init__(self):
        if self.level < 1:
            raise ConfigError("level", "must be >= 1")

    @property
    def h(self):
        return 2.0 ** (-self.level)

    @property
    def ncells_side(self):
        return 2 ** self.level

    @property
    def ncells(self):
        return self.ncells_side ** 2

    @property
    def nvertices(self):
        return (self.ncells_side + 1) ** 2


def _shape_values(xi, eta):
    """Q1 shape values at local coords, node order (0,0),(1,0),(0,1),(1,1)."""
    return np.stack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1
    )


def _shape_gradients(xi, eta):
    dxi = np.stack([-(1 - eta), (1 - eta), -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, (1 - xi), xi], axis=-1)
    return dxi, deta


class FESpace:
    """Q1 finite element space on a dyadic grid.

    continuity "continuous" places dofs at vertices with strong Dirichlet
    elimination on the requested edges; "discontinuous" places 4 dofs per
    cell and admits no strong constraints.
    """

    def __init__(self, grid, continuity, dirichlet_edges=()):
        if continuity not in ("continuous", "discontinuous"):
            raise ConfigError("continuity", f"unknown continuity {continuity!r}")
        edges = frozenset(dirichlet_edges)
        if not edges <= set(EDGES):
            raise ConfigError("dirichlet_edges", f"unknown edges {edges - set(EDGES)}")
        if continuity == "discontinuous" and edges:
            raise ConfigError("dirichlet_edges", "discontinuous spaces take no strong constraints")
        self.grid = grid
        self.continuity = continuity
        self.dirichlet_edges = edges
        self._build_dofs()
        self._mass = None

    @property
    def key(self):
        return (self.grid.level, self.continuity, tuple(sorted(self.dirichlet_edges)))

    def __eq__(self, other):
        return isinstance(other, FESpace) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def _build_dofs(self):
        g = self.grid
        nc = g.ncells_side
        if self.continuity == "continuous":
            n1 = nc + 1
            self.n_full = n1 * n1
            ii, jj = np.meshgrid(np.arange(n1), np.arange(n1), indexing="xy")
            # dof v = j*n1 + i at vertex (i*h, j*h)
            x = ii.ravel() * g.h
            y = jj.ravel() * g.h
            constrained = np.zeros(self.n_full, dtype=bool)
            if "left" in self.dirichlet_edges:
                constrained |= np.isclose(x, 0.0)
            if "right" in self.dirichlet_edges:
                constrained |= np.isclose(x, 1.0)
            if "bottom" in self.dirichlet_edges:
                constrained |= np.isclose(y, 0.0)
            if "top" in self.dirichlet_edges:
                constrained |= np.isclose(y, 1.0)
            self._coords = np.column_stack([x, y])
            self.free = np.flatnonzero(~constrained)
        else:
            self.n_full = 4 * g.ncells
            cx, cy = np.meshgrid(np.arange(nc), np.arange(nc), indexing="xy")
            cx = np.repeat(cx.reshape(-1, 1), 4, axis=1)
            cy = np.repeat(cy.reshape(-1, 1), 4, axis=1)
            loc = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
            x = (cx + loc[:, 0][None, :]) * g.h
            y = (cy + loc[:, 1][None, :]) * g.h
            self._coords = np.column_stack([x.ravel(), y.ravel()])
            self.free = np.arange(self.n_full)
        self.n_free = self.free.size

    def cell_dofs(self, sx, sy):
        """Global dofs of cells (sx, sy), local order (0,0),(1,0),(0,1),(1,1)."""
        nc = self.grid.ncells_side
        if self.continuity == "continuous":
            n1 = nc + 1
            v00 = sy * n1 + sx
            return np.stack([v00, v00 + 1, v00 + n1, v00 + n1 + 1], axis=-1)
        c = sy * nc + sx
        return np.stack([4 * c, 4 * c + 1, 4 * c + 2, 4 * c + 3], axis=-1)

    def node_coords(self):
        """Coordinates of all (full) dofs."""
        return self._coords

    def interpolate(self, f):
        """Nodal interpolation of f(x, y); returns free-dof coefficients."""
        full = np.asarray(f(self._coords[:, 0], self._coords[:, 1]), dtype=float)
        full = np.broadcast_to(full, (self.n_full,)).copy()
        return full[self.free]

    def prolong(self, vec):
        """Insert zeros at constrained dofs."""
        vec = np.asarray(vec, dtype=float)
        full = np.zeros(self.n_full)
        full[self.free] = vec
        return full

    def restrict(self, full):
        return np.asarray(full, dtype=float)[self.free]

    def mass_matrix(self):
        if self._mass is None:
            self._mass = assemble(self, self, MASS)
        return self._mass


def build_space(level, continuity, dirichlet_edges=()):
    """Construct an FESpace; ConfigError on invalid level."""
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise ConfigError("level", "must be a positive integer")
    return FESpace(Grid(int(level)), continuity, dirichlet_edges)


def _locate(space, fine_level, cxf, cyf, xi_f, eta_f):
    """Map fine-cell local points into (dofs, xi, eta) of the space's grid."""
    k = fine_level - space.grid.level
    if k < 0:
        raise AssemblyError("assembly grid must be at least as fine as the space grid")
    sx = cxf >> k
    sy = cyf >> k
    scale = float(2 ** k)
    xi = (cxf - (sx << k) + xi_f) / scale
    eta = (cyf - (sy << k) + eta_f) / scale
    return space.cell_dofs(sx, sy), xi, eta


_KERNELS = {
    "mass",
    "stiff",
    "conv_x",
    "conv_y",
    "adjconv_x",
    "adjconv_y",
    "dxdx",
    "dydy",
    "dxdy",
    "dydx",
}


def assemble(trial, test, kind):
    """Sparse component matrix with entries <op phi_j, psi_i> on free dofs.

    Rows run over the test space, columns over the trial space.  Both
    spaces must live on (0,1)^2; nested dyadic levels are integrated
    exactly on the finer grid.
    """
    if not isinstance(kind, ComponentKind) or (
        kind.tag not in _KERNELS and kind.tag != "edge_mass"
    ):
        raise AssemblyError(f"unsupported component kind {kind!r}")
    if kind.tag == "edge_mass":
        return _assemble_edge_mass(trial, test, kind.edge)

    fine = max(trial.grid.level, test.grid.level)
    nc = 2 ** fine
    hf = 2.0 ** (-fine)
    cxf, cyf = np.meshgrid(np.arange(nc), np.arange(nc), indexing="xy")
    cxf = cxf.ravel()
    cyf = cyf.ravel()

    data = None
    for gx in _GAUSS2:
        for gy in _GAUSS2:
            tr_dofs, xi_t, eta_t = _locate(trial, fine, cxf, cyf, gx, gy)
            te_dofs, xi_s, eta_s = _locate(test, fine, cxf, cyf, gx, gy)
            w = 0.25 * hf * hf

            if kind.tag == "mass":
                a = _shape_values(xi_t, eta_t)
                b = _shape_values(xi_s, eta_s)
                contrib = b[:, :, None] * a[:, None, :]
            elif kind.tag == "stiff":
                dxa, dya = _shape_gradients(xi_t, eta_t)
                dxb, dyb = _shape_gradients(xi_s, eta_s)
                ht, hs = trial.grid.h, test.grid.h
                contrib = (dxb[:, :, None] / hs) * (dxa[:, None, :] / ht) + (
                    dyb[:, :, None] / hs
                ) * (dya[:, None, :] / ht)
            elif kind.tag in ("conv_x", "conv_y"):
                dxa, dya = _shape_gradients(xi_t, eta_t)
                grad = dxa if kind.tag == "conv_x" else dya
                b = _shape_values(xi_s, eta_s)
                contrib = b[:, :, None] * (grad[:, None, :] / trial.grid.h)
            elif kind.tag in ("adjconv_x", "adjconv_y"):
                a = _shape_values(xi_t, eta_t)
                dxb, dyb = _shape_gradients(xi_s, eta_s)
                grad = dxb if kind.tag == "adjconv_x" else dyb
                contrib = (grad[:, :, None] / test.grid.h) * a[:, None, :]
            else:  # dxdx / dydy / dxdy / dydx: <d phi, d psi> cross terms
                dxa, dya = _shape_gradients(xi_t, eta_t)
                dxb, dyb = _shape_gradients(xi_s, eta_s)
                ga = dxa if kind.tag in ("dxdx", "dxdy") else dya
                gb = dxb if kind.tag in ("dxdx", "dydx") else dyb
                contrib = (gb[:, :, None] / test.grid.h) * (
                    ga[:, None, :] / trial.grid.h
                )

            block = w * contrib
            if data is None:
                rows = np.broadcast_to(te_dofs[:, :, None], block.shape).ravel()
                cols = np.broadcast_to(tr_dofs[:, None, :], block.shape).ravel()
                data = block.ravel().copy()
            else:
                data += block.ravel()

    A = sp.coo_matrix(
        (data, (rows, cols)), shape=(test.n_full, trial.n_full)
    ).tocsr()
    return A[test.free, :][:, trial.free].tocsr()


def _edge_point(edge, t):
    if edge == "bottom":
        return t, np.zeros_like(t)
    if edge == "top":
        return t, np.ones_like(t)
    if edge == "left":
        return np.zeros_like(t), t
    return np.ones_like(t), t  # right


def _edge_cells(space, edge, t):
    """dofs and local coords of the cells adjacent to boundary points t."""
    nc = space.grid.ncells_side
    h = space.grid.h
    s = np.minimum((t / h).astype(int), nc - 1)
    frac = t / h - s
    if edge == "bottom":
        return space.cell_dofs(s, np.zeros_like(s)), frac, np.zeros_like(frac)
    if edge == "top":
        return space.cell_dofs(s, np.full_like(s, nc - 1)), frac, np.ones_like(frac)
    if edge == "left":
        return space.cell_dofs(np.zeros_like(s), s), np.zeros_like(frac), frac
    return space.cell_dofs(np.full_like(s, nc - 1), s), np.ones_like(frac), frac


def _edge_segments(level, breakpoints=()):
    nodes = np.linspace(0.0, 1.0, 2 ** level + 1)
    pts = np.unique(np.concatenate([nodes, np.asarray(breakpoints, dtype=float)]))
    pts = pts[(pts >= 0.0) & (pts <= 1.0)]
    return pts[:-1], pts[1:]


def _assemble_edge_mass(trial, test, edge):
    fine = max(trial.grid.level, test.grid.level)
    a_lo, a_hi = _edge_segments(fine)
    rows_all, cols_all, data_all = [], [], []
    for g in _GAUSS2:
        t = a_lo + g * (a_hi - a_lo)
        w = 0.5 * (a_hi - a_lo)
        tr_dofs, xi_t, eta_t = _edge_cells(trial, edge, t)
        te_dofs, xi_s, eta_s = _edge_cells(test, edge, t)
        a = _shape_values(xi_t, eta_t)
        b = _shape_values(xi_s, eta_s)
        block = w[:, None, None] * b[:, :, None] * a[:, None, :]
        rows_all.append(np.broadcast_to(te_dofs[:, :, None], block.shape).ravel())
        cols_all.append(np.broadcast_to(tr_dofs[:, None, :], block.shape).ravel())
        data_all.append(block.ravel())
    A = sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(test.n_full, trial.n_full),
    ).tocsr()
    return A[test.free, :][:, trial.free].tocsr()


def assemble_edge_functional(test, edge, g, breakpoints=()):
    """Vector of <g, psi_i> over one boundary edge of the test space.

    ``g`` is evaluated as g(x, y) at boundary quadrature points; segments
    are split at ``breakpoints`` (arc coordinates) so jump data never
    straddles a quadrature interval.
    """
    a_lo, a_hi = _edge_segments(test.grid.level, breakpoints)
    vec = np.zeros(test.n_full)
    for gp in _GAUSS2:
        t = a_lo + gp * (a_hi - a_lo)
        w = 0.5 * (a_hi - a_lo)
        dofs, xi, eta = _edge_cells(test, edge, t)
        x, y = _edge_point(edge, t)
        vals = np.asarray(g(x, y), dtype=float)
        vals = np.broadcast_to(vals, t.shape)
        contrib = (w * vals)[:, None] * _shape_values(xi, eta)
        np.add.at(vec, dofs.ravel(), contrib.ravel())
    return vec[test.free]


class ConstantSource:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x, y):
        return np.full_like(np.asarray(x, dtype=float), self.value)


class DiagonalJumpSource:
    """Piecewise constant source with a jump across the diagonal x = y.

    ``below`` applies for x >= y, ``above`` for x < y.
    """

    def __init__(self, below, above):
        self.below = float(below)
        self.above = float(above)

    def __call__(self, x, y):
        return np.where(np.asarray(x) >= np.asarray(y), self.below, self.above)


# edge-midpoint rule on a triangle (barycentric weights), exact for degree 2
_TRI_MID_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def _diagonal_cell_contribution(test, source, hf, fine, s_idx):
    """Integrate source * psi over the two triangles of diagonal cells (s, s)."""
    vec = np.zeros(test.n_full)
    # lower triangle (x >= y): vertices (0,0),(1,0),(1,1); upper: (0,0),(1,1),(0,1)
    tris = {
        "lower": (np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), source.below),
        "upper": (np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), source.above),
    }
    for verts, value in tris.values():
        pts = _TRI_MID_BARY @ verts  # rows are local (xi, eta) of edge midpoints
        area = 0.5
        w = value * area * hf * hf / 3.0
        for xi0, eta0 in pts:
            xi_f = np.full(s_idx.shape, xi0)
            eta_f = np.full(s_idx.shape, eta0)
            dofs, xi, eta = _locate(test, fine, s_idx, s_idx, xi_f, eta_f)
            np.add.at(vec, dofs.ravel(), (w * _shape_values(xi, eta)).ravel())
    return vec


def assemble_rhs(test, source, inflow=None):
    """Load vector <f, psi_i> plus optional weighted inflow boundary terms.

    ``source`` may be a number, a ConstantSource, a DiagonalJumpSource
    (jump along x = y, integrated with split triangle quadrature), or a
    smooth callable f(x, y).  ``inflow`` is an optional triple
    (edge set, boundary data g_b(x, y), {edge: weight}) whose terms are
    added as weight * int_edge g_b psi.
    """
    if isinstance(source, (int, float)):
        source = ConstantSource(source)
    if not callable(source):
        raise DataError(f"source {source!r} is not representable")

    fine = test.grid.level
    nc = 2 ** fine
    hf = test.grid.h
    cxf, cyf = np.meshgrid(np.arange(nc), np.arange(nc), indexing="xy")
    cxf = cxf.ravel()
    cyf = cyf.ravel()
    diagonal = isinstance(source, DiagonalJumpSource)
    if diagonal:
        keep = cxf != cyf
        cxk, cyk = cxf[keep], cyf[keep]
    else:
        cxk, cyk = cxf, cyf

    vec = np.zeros(test.n_full)
    for gx in _GAUSS2:
        for gy in _GAUSS2:
            dofs, xi, eta = _locate(test, fine, cxk, cyk, gx, gy)
            x = (cxk + gx) * hf
            y = (cyk + gy) * hf
            vals = np.broadcast_to(np.asarray(source(x, y), dtype=float), x.shape)
            w = 0.25 * hf * hf
            np.add.at(vec, dofs.ravel(), (w * vals[:, None] * _shape_values(xi, eta)).ravel())
    if diagonal:
        s_idx = np.arange(nc)
        vec += _diagonal_cell_contribution(test, source, hf, fine, s_idx)

    out = vec[test.free]
    if inflow is not None:
        edges, g_b, weights = inflow
        for e in edges:
            w = weights[e] if isinstance(weights, dict) else weights
            if w == 0.0:
                continue
            out = out + w * assemble_edge_functional(test, e, g_b)
    return out


def l2_distance(space, a, b):
    """sqrt((a-b)^T M (a-b)) with M the space's mass matrix."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != (space.n_free,):
        raise ShapeError(
            f"l2_distance: expected two vectors of length {space.n_free}, got {a.shape} and {b.shape}"
        )
    d = a - b
    return float(np.sqrt(max(d @ (space.mass_matrix() @ d), 0.0)))
