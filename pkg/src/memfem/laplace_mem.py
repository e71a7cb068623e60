"""Lowest-order Raviart-Thomas / P0 discretization of the Laplace problem
with memory (non-fickian flow).

The strong model is -lap(u) = f + int_0^t k(t-s) lap(u)(s) ds with the
convolution kernel k(t-s) = (1/delta) e^{-(t-s)/delta}.  The mixed pair
is sigma = grad u in RT0 against u in elementwise constants:

    (sigma, tau) + (u, div tau) = 0,
    (div sigma, v) = -(f, v) - int_0^t k(t,s) (div sigma(s), v) ds,

so the kernel attached to the constraint row is the NEGATED k (k1 = k2
absent, k3 = -k): that sign is forced by substituting div sigma = lap u
into the strong form, and it keeps the memory feedback contractive (the
row resolvent decays from 1 to 1/2 instead of growing linearly).  The
homogeneous Dirichlet condition on u is natural in this formulation, so
every edge carries a flux dof and no rows are constrained.

RT0 basis functions are normalized to unit normal-flux density across
their edge, oriented low vertex index -> high vertex index, so the
divergence pairing integrates to +-|edge| exactly.  All other integrals
use the edge-midpoint (3-point) rule, which is exact for the quadratic
RT0 pairings.

The verification problem is manufactured: u = cos(t) x(1-x) y(1-y), for
which the memory convolution of the load has the closed form coded in
:class:`ManufacturedSolution` (cross-checked against adaptive quadrature
in the test suite before use).
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .kernels import MemoryKernel, fickian_kernel
from .mesh import TriMesh, build_dofmap, structured_unit_square
from .volterra import BlockSaddleSystem, TimeGrid, VolterraStepper, trapezoid_weights

__all__ = [
    "RT0Space",
    "ManufacturedSolution",
    "LaplaceProblem",
    "assemble_rt0_mass",
    "assemble_rt0_div",
    "gram_hdiv",
    "gram_p0",
    "interpolate_rt0",
    "manufactured_rhs",
    "laplace_errors",
    "probe",
    "probe_cell_index",
    "LAPLACE_FIELDS",
]

LAPLACE_FIELDS = ("sigma", "u")


class RT0Space:
    """RT0 geometry tables: signed basis data and midpoint quadrature."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.edge_map = build_dofmap(mesh, "RT0")
        self.cell_map = build_dofmap(mesh, "P0_tri")
        p = mesh.vertices
        t = mesh.triangles
        self.areas = mesh.areas
        elen = mesh.edge_lengths

        # quadrature: the three edge midpoints, weight |K|/3 each
        corners = p[t]                                   # (nt, 3, 2)
        mids = 0.5 * (corners[:, [1, 2, 0]] + corners[:, [2, 0, 1]])
        self.quad_x = mids                               # (nt, 3, 2)
        self.quad_w = np.repeat(self.areas[:, None] / 3.0, 3, axis=1)

        # basis phi_loc(x) = sign * |e|/(2|K|) (x - P_opposite)
        sgn = mesh.tri_edge_signs
        ell = elen[mesh.tri_edges]                       # (nt, 3)
        coef = sgn * ell / (2.0 * self.areas[:, None])   # (nt, 3)
        diff = mids[:, :, None, :] - corners[:, None, :, :]   # (nt, q, loc, 2)
        self.basis_q = coef[:, None, :, None] * diff     # (nt, q, loc, 2)
        self.div = sgn * ell / self.areas[:, None]       # (nt, 3), constant

    @property
    def n_edges(self) -> int:
        return self.mesh.n_edges

    @property
    def n_cells(self) -> int:
        return self.mesh.n_triangles

    def flux_values(self, dofs: np.ndarray) -> np.ndarray:
        """Vector field values at the quadrature points, (nt, 3, 2)."""
        local = dofs[self.mesh.tri_edges]                # (nt, 3)
        return np.einsum("kqld,kl->kqd", self.basis_q, local)

    def div_values(self, dofs: np.ndarray) -> np.ndarray:
        """Cellwise-constant divergence values, (nt,)."""
        return np.einsum("kl,kl->k", self.div, dofs[self.mesh.tri_edges])


def assemble_rt0_mass(space: RT0Space) -> sp.csr_matrix:
    """L2 mass matrix of the RT0 space (midpoint rule, exact here)."""
    if np.any(space.areas <= 0.0):
        raise ConfigError("degenerate triangle in the mesh")
    local = np.einsum("kq,kqld,kqmd->klm", space.quad_w, space.basis_q,
                      space.basis_q)
    te = space.mesh.tri_edges
    rows = np.repeat(te, 3, axis=1).ravel()
    cols = np.tile(te, (1, 3)).ravel()
    n = space.n_edges
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_rt0_div(space: RT0Space) -> sp.csr_matrix:
    """Divergence pairing (div tau, v): entries are signed edge lengths."""
    te = space.mesh.tri_edges
    vals = space.div * space.areas[:, None]              # sign * |e|
    rows = np.repeat(np.arange(space.n_cells), 3)
    return sp.coo_matrix((vals.ravel(), (rows, te.ravel())),
                         shape=(space.n_cells, space.n_edges)).tocsr()


def gram_hdiv(space: RT0Space) -> sp.csr_matrix:
    """H(div) Gram matrix: (sigma, tau) + (div sigma, div tau)."""
    local = np.einsum("k,kl,km->klm", space.areas, space.div, space.div)
    te = space.mesh.tri_edges
    rows = np.repeat(te, 3, axis=1).ravel()
    cols = np.tile(te, (1, 3)).ravel()
    n = space.n_edges
    divdiv = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return (assemble_rt0_mass(space) + divdiv).tocsr()


def gram_p0(space: RT0Space) -> sp.csr_matrix:
    """L2 Gram of the cellwise-constant space (diagonal of areas)."""
    return sp.diags(space.areas, format="csr")


def interpolate_rt0(space: RT0Space, field: Callable) -> np.ndarray:
    """Canonical edge-flux interpolant: mean normal component per edge.

    ``field(x, y)`` returns an (..., 2) array; the edge integral uses
    2-point Gauss, exact for the polynomial test fields used here.
    """
    mesh = space.mesh
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    tang = b - a
    elen = np.hypot(tang[:, 0], tang[:, 1])
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / elen[:, None]
    g = 0.5 / math.sqrt(3.0)
    dofs = np.zeros(mesh.n_edges)
    for s in (0.5 - g, 0.5 + g):
        pt = a + s * tang
        vals = np.asarray(field(pt[:, 0], pt[:, 1]), float)
        dofs += 0.5 * np.einsum("ed,ed->e", vals, normal)
    return dofs


class ManufacturedSolution:
    """u = cos(t) x(1-x) y(1-y) with the exponential memory kernel.

    The load is f = -lap(u) - int_0^t k(t-s) lap(u)(s) ds; with
    k = (1/delta) e^{-(t-s)/delta} the convolution of cos against the
    kernel has the closed form

        int_0^t (1/d) e^{-(t-s)/d} cos(s) ds
            = a (a cos t + sin t - a e^{-a t}) / (a^2 + 1),  a = 1/d.
    """

    def __init__(self, delta: Optional[float]):
        if delta is not None and delta <= 0.0:
            raise ConfigError(f"delta must be positive, got {delta}")
        self.delta = delta

    @staticmethod
    def shape(x, y):
        return (x - x * x) * (y - y * y)

    @staticmethod
    def shape_lap_factor(x, y):
        # -lap of the spatial shape
        return 2.0 * ((x - x * x) + (y - y * y))

    def u(self, x, y, t):
        return math.cos(t) * self.shape(x, y)

    def sigma(self, x, y, t):
        gx = (1.0 - 2.0 * x) * (y - y * y)
        gy = (x - x * x) * (1.0 - 2.0 * y)
        return math.cos(t) * np.stack([gx, gy], axis=-1)

    def memory_integral(self, t):
        """Closed form of the kernel/cosine convolution at time t."""
        if self.delta is None:
            return 0.0 * np.asarray(t, float)
        a = 1.0 / self.delta
        t = np.asarray(t, float)
        return a * (a * np.cos(t) + np.sin(t) - a * np.exp(-a * t)) / (a * a + 1.0)

    def load_factor(self, t):
        return np.cos(np.asarray(t, float)) + self.memory_integral(t)

    def f(self, x, y, t):
        return self.shape_lap_factor(x, y) * float(self.load_factor(t))


def manufactured_rhs(space: RT0Space, manufactured: ManufacturedSolution,
                     t: float) -> np.ndarray:
    """Cell data -(f, v) at time t via the midpoint rule."""
    base = manufactured_rhs_base(space, manufactured)
    return float(manufactured.load_factor(t)) * base


def manufactured_rhs_base(space: RT0Space,
                          manufactured: ManufacturedSolution) -> np.ndarray:
    """Time-independent part of the load cells (the f factorizes)."""
    xq = space.quad_x
    shape_vals = manufactured.shape_lap_factor(xq[..., 0], xq[..., 1])
    return -np.sum(space.quad_w * shape_vals, axis=1)


def probe_cell_index(m: int, point) -> int:
    """Triangle containing ``point`` in the structured m x m mesh.

    Points on the SW-NE diagonal resolve to the lower triangle, which
    makes the probe deterministic.
    """
    x, y = float(point[0]), float(point[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"probe point {point} outside the unit square")
    i = min(int(x * m), m - 1)
    j = min(int(y * m), m - 1)
    xi = x * m - i
    eta = y * m - j
    lower = xi >= eta
    return 2 * (j * m + i) + (0 if lower else 1)


def probe(series, point, m: int) -> np.ndarray:
    """Cell values of u_h at the probe point for a stored state series.

    ``series`` is an iterable of (sigma_n, u_n) pairs; the returned array
    holds one cell-constant value per time node, CSV-ready.
    """
    cell = probe_cell_index(m, point)
    return np.array([u[cell] for _, u in series])


class _LaplaceErrorAccumulator:
    """Trapezoid-in-time L1 accumulation of the sigma and u errors."""

    def __init__(self, space: RT0Space, manufactured: ManufacturedSolution,
                 grid: TimeGrid):
        xq = space.quad_x
        self.space = space
        self.sigma_spatial = manufactured.sigma(xq[..., 0], xq[..., 1], 0.0)
        self.u_spatial = manufactured.shape(xq[..., 0], xq[..., 1])
        self.weights = trapezoid_weights(grid, grid.n_steps)
        self.e0 = {"sigma": 0.0, "u": 0.0}

    def add_step(self, n: int, t: float, sig: np.ndarray, u: np.ndarray):
        w_t = self.weights[n]
        cos_t = math.cos(t)
        dsig = self.space.flux_values(sig) - cos_t * self.sigma_spatial
        err_sig = math.sqrt(float(np.sum(self.space.quad_w
                                         * np.sum(dsig * dsig, axis=-1))))
        du = u[:, None] - cos_t * self.u_spatial
        err_u = math.sqrt(float(np.sum(self.space.quad_w * du * du)))
        self.e0["sigma"] += w_t * err_sig
        self.e0["u"] += w_t * err_u

    def result(self):
        return {"sigma": {"e0": self.e0["sigma"]}, "u": {"e0": self.e0["u"]}}


def laplace_errors(series, manufactured: ManufacturedSolution,
                   grid: TimeGrid, space: RT0Space):
    """L1-in-time L2 errors of a (sigma, u) series against the oracle."""
    acc = _LaplaceErrorAccumulator(space, manufactured, grid)
    count = 0
    for n, (sig, u) in enumerate(series):
        acc.add_step(n, grid.times[n], sig, u)
        count += 1
    if count != grid.n_steps + 1:
        raise ValueError(f"series holds {count} states, grid needs "
                         f"{grid.n_steps + 1}")
    return acc.result()


class LaplaceProblem:
    """One structured-mesh discretization of the non-fickian flow model."""

    def __init__(self, m: int, delta: Optional[float] = 0.01,
                 kernel: Optional[MemoryKernel] = "from_delta"):
        self.m = m
        self.mesh = structured_unit_square(m)
        self.space = RT0Space(self.mesh)
        self.manufactured = ManufacturedSolution(delta)
        if kernel == "from_delta":
            if delta is None:
                kernel = None
            else:
                # constraint row carries -k(t-s); see the module docstring
                base = fickian_kernel(delta)
                kernel = MemoryKernel.exp_convolution(c=-base.c, rate=base.rate)
        self.kernel = kernel
        self.a = assemble_rt0_mass(self.space)
        self.b = assemble_rt0_div(self.space)
        self.system = BlockSaddleSystem(self.a, self.b, k3=kernel)
        self._rhs_base = manufactured_rhs_base(self.space, self.manufactured)
        self.h = math.sqrt(2.0) / m

    @property
    def dofs(self) -> int:
        return self.space.n_edges + self.space.n_cells

    def rhs(self, t: float):
        g = float(self.manufactured.load_factor(t)) * self._rhs_base
        return np.zeros(self.space.n_edges), g

    def run(self, grid: TimeGrid, probe_point=None, audit: bool = False,
            collect: Optional[Callable] = None):
        """Step through the grid; returns (errors, probe series, stepper)."""
        stepper = VolterraStepper(self.system, grid, audit=audit)
        acc = _LaplaceErrorAccumulator(self.space, self.manufactured, grid)
        probe_vals = None
        cell = None
        if probe_point is not None:
            cell = probe_cell_index(self.m, probe_point)
            probe_vals = np.empty(grid.n_steps + 1)

        def on_step(n, t, sig, u):
            acc.add_step(n, t, sig, u)
            if probe_vals is not None:
                probe_vals[n] = u[cell]
            if collect is not None:
                collect(n, t, sig, u)

        stepper.run(lambda t: self.rhs(t)[0], lambda t: self.rhs(t)[1],
                    on_step=on_step)
        return acc.result(), probe_vals, stepper
