"""Bending-moment mixed formulation of the viscoelastic Timoshenko beam.

The unknown pair is u = (M, V) in continuous P1 x P1 (bending moment and
shear) against p = (beta, w) in P0 x P0 (rotation and deflection).  The
bilinear forms are

    a((M,V),(tau,xi)) = (M/Ihat, tau) + eps^2 (V/kappa, xi),
    b((tau,xi),(eta,v)) = (eta, tau' - xi) - (v, xi'),

with Ihat = I/eps^3, Ahat = ks A/eps, kappa = Ahat/(2(1+nu)), and the
load row carries -(f_E, v) - (g_E, eta) with f_E = f/E(0) for the scaled,
thickness-independent loads.  The hereditary term sits in the constraint
row only (k1 = k2 absent, k3 = dE/dt(t-s)/E(0)).

Clamped ends are natural here: no essential conditions are imposed on
(M, V), and none exist for the multiplier pair.

The exact-solution oracle uses the separability of step loads: every
field equals its memory-free spatial solution times the scalar creep
factor.  The spatial part is taken from a fine reference mesh, the time
factor from the closed-form creep solution, so the oracle never touches
the Volterra stepping path it is used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, OracleError
from .kernels import CreepFactor, MemoryKernel, creep_factor
from .mesh import Mesh1D, uniform_mesh1d
from .volterra import BlockSaddleSystem, TimeGrid, VolterraStepper, trapezoid_weights

__all__ = [
    "BeamConfig",
    "BeamReference",
    "BeamProblem",
    "joined_profile",
    "smooth_profile",
    "assemble_beam_a",
    "assemble_beam_b",
    "beam_rhs",
    "beam_gram_v",
    "beam_gram_q",
    "beam_exact_reference",
    "beam_errors",
    "beam_reference_norms",
    "BEAM_FIELDS",
]

BEAM_FIELDS = ("M", "V", "w", "beta")

# Gauss-Legendre nodes/weights on (-1, 1)
_G2 = (np.array([-1.0, 1.0]) / math.sqrt(3.0), np.array([1.0, 1.0]))
_G4 = (np.array([-0.8611363115940526, -0.3399810435848563,
                 0.3399810435848563, 0.8611363115940526]),
       np.array([0.3478548451374538, 0.6521451548625461,
                 0.6521451548625461, 0.3478548451374538]))


def _gauss_points(mesh: Mesh1D, rule):
    """Physical quadrature points and weights, shape (n_elements, n_q)."""
    xi, w = rule
    x0 = mesh.nodes[:-1][:, None]
    ell = mesh.cell_lengths[:, None]
    xq = x0 + 0.5 * ell * (1.0 + xi[None, :])
    wq = 0.5 * ell * w[None, :]
    return xq, wq


def _p1_at(rule):
    """P1 basis values on the reference element for a Gauss rule."""
    xi, _ = rule
    return np.column_stack([0.5 * (1.0 - xi), 0.5 * (1.0 + xi)])


@dataclass(frozen=True)
class BeamConfig:
    """Geometry and material layout of one beam configuration.

    ``I`` and ``A`` are callables of position (vectorized); ``eps`` is
    the thickness parameter with ``eps^2 = (1/L) int I/(A L^2)``.  The
    ``d`` field records the physical thickness when the profile has one.
    """

    profile: str
    L: float
    nu: float
    ks: float
    eps: float
    I: Callable
    A: Callable
    d: Optional[float] = None
    ihat_override: Optional[Callable] = None
    kappa_override: Optional[Callable] = None

    def __post_init__(self):
        if not (self.L > 0.0 and self.eps > 0.0 and self.ks > 0.0):
            raise ConfigError("beam needs positive length, eps, and ks")
        if not -1.0 < self.nu < 0.5:
            raise ConfigError(f"Poisson ratio {self.nu} out of range")
        x = np.linspace(0.0, self.L, 257)
        if np.any(self.ihat(x) <= 0.0) or np.any(self.ahat(x) <= 0.0):
            raise ConfigError("Ihat and Ahat must be positive on the beam")

    def ihat(self, x):
        if self.ihat_override is not None:
            return self.ihat_override(x)
        return self.I(x) / self.eps ** 3

    def ahat(self, x):
        return self.ks * self.A(x) / self.eps

    def kappa(self, x):
        if self.kappa_override is not None:
            return self.kappa_override(x)
        return self.ahat(x) / (2.0 * (1.0 + self.nu))

    @staticmethod
    def from_hat(ihat: Callable, kappa: Callable, eps: float,
                 L: float = 1.0) -> "BeamConfig":
        """Direct coefficient override, mainly for tests and custom runs."""
        return BeamConfig(profile="custom", L=L, nu=0.0, ks=1.0, eps=eps,
                          I=lambda x: np.ones_like(np.asarray(x, float)),
                          A=lambda x: np.ones_like(np.asarray(x, float)),
                          ihat_override=ihat, kappa_override=kappa)


def joined_profile(d: float, L: float = 1.0, nu: float = 0.35,
                   ks: float = 5.0 / 6.0) -> BeamConfig:
    """Two rigidly joined clamped beams with a section jump at L/2.

    Cross-section 9e-2 d on the left half and 3e-2 d on the right;
    moments of inertia 27e-2 d^3/4 and 1e-2 d^3/4.  The thickness
    parameter satisfies eps^2 = 5 d^2 / (12 L^2).
    """
    if not d > 0.0:
        raise ConfigError(f"thickness must be positive, got d={d}")
    half = L / 2.0

    def area(x):
        x = np.asarray(x, float)
        return np.where(x <= half, 9e-2 * d, 3e-2 * d)

    def inertia(x):
        x = np.asarray(x, float)
        return np.where(x <= half, 27e-2 * d ** 3 / 4.0, 1e-2 * d ** 3 / 4.0)

    eps = math.sqrt(5.0 * d * d / (12.0 * L * L))
    return BeamConfig(profile="joined", L=L, nu=nu, ks=ks, eps=eps,
                      I=inertia, A=area, d=d)


def smooth_profile(L: float = 1.0, nu: float = 0.35,
                   ks: float = 5.0 / 6.0) -> BeamConfig:
    """Clamped beam with I = e^x/12 and A = 12 e^{-x}.

    On the unit-length beam eps^2 = (e^2 - 1)/288, so eps ~ 0.14894.
    """
    if L != 1.0:
        raise ConfigError("the smooth profile is defined on a unit-length beam")
    eps = math.sqrt((math.e ** 2 - 1.0) / 288.0)
    return BeamConfig(profile="smooth", L=L, nu=nu, ks=ks, eps=eps,
                      I=lambda x: np.exp(np.asarray(x, float)) / 12.0,
                      A=lambda x: 12.0 * np.exp(-np.asarray(x, float)))


def beam_mesh(cfg: BeamConfig, n: int) -> Mesh1D:
    """Uniform mesh honoring the joined-profile parity rule."""
    if cfg.profile == "joined" and n % 2 != 0:
        raise ConfigError(
            f"joined beams need an even element count so x=L/2 is a node, got n={n}")
    return uniform_mesh1d(cfg.L, n)


def assemble_beam_a(cfg: BeamConfig, mesh: Mesh1D) -> sp.csr_matrix:
    """Block-diagonal Gram matrix of the a-form, 2(n+1) square.

    The M-block carries the 1/Ihat weight and the V-block eps^2/kappa,
    both integrated with 2-point Gauss per element.
    """
    xq, wq = _gauss_points(mesh, _G2)
    phi = _p1_at(_G2)
    w_m = wq / cfg.ihat(xq)
    w_v = wq * (cfg.eps ** 2) / cfg.kappa(xq)
    if np.any(~np.isfinite(w_m)) or np.any(~np.isfinite(w_v)):
        raise ConfigError("beam coefficients evaluate to non-finite values")
    loc_m = np.einsum("eq,qi,qj->eij", w_m, phi, phi)
    loc_v = np.einsum("eq,qi,qj->eij", w_v, phi, phi)

    n = mesh.n_elements
    n_nodes = n + 1
    conn = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    rows = np.repeat(conn, 2, axis=1).ravel()
    cols = np.tile(conn, (1, 2)).ravel()
    a_m = sp.coo_matrix((loc_m.ravel(), (rows, cols)),
                        shape=(n_nodes, n_nodes)).tocsr()
    a_v = sp.coo_matrix((loc_v.ravel(), (rows, cols)),
                        shape=(n_nodes, n_nodes)).tocsr()
    return sp.block_diag([a_m, a_v], format="csr")


def assemble_beam_b(mesh: Mesh1D) -> sp.csr_matrix:
    """Constraint matrix of (eta, tau' - xi) - (v, xi'), 2n x 2(n+1).

    All pairings are exact: tau' is elementwise constant and xi is P1,
    so every entry is +-1 or a half cell length.
    """
    n = mesh.n_elements
    n_nodes = n + 1
    ell = mesh.cell_lengths
    rows, cols, vals = [], [], []
    for i in range(n):
        # beta-row, M columns: integral of the P1 derivatives
        rows += [i, i]
        cols += [i, i + 1]
        vals += [-1.0, 1.0]
        # beta-row, V columns: -(integral of the P1 basis)
        rows += [i, i]
        cols += [n_nodes + i, n_nodes + i + 1]
        vals += [-0.5 * ell[i], -0.5 * ell[i]]
        # w-row, V columns: -(integral of the P1 derivatives)
        rows += [n + i, n + i]
        cols += [n_nodes + i, n_nodes + i + 1]
        vals += [1.0, -1.0]
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(2 * n, 2 * n_nodes)).tocsr()


def beam_rhs(cfg: BeamConfig, mesh: Mesh1D, f: Callable, g: Callable,
             t: float, e0: float = 1.0):
    """Right-hand sides at time t: zero a-row and the load b-row.

    The b-row entries are -(f_E, v) on the w cells and -(g_E, eta) on the
    beta cells with f_E = f/E(0), integrated with 4-point Gauss (exact to
    machine precision for the exponential loads used in practice).
    """
    n = mesh.n_elements
    xq, wq = _gauss_points(mesh, _G4)
    rhs = np.zeros(2 * n)
    if g is not None:
        rhs[:n] = -np.sum(wq * np.asarray(g(xq, t), float), axis=1) / e0
    if f is not None:
        rhs[n:] = -np.sum(wq * np.asarray(f(xq, t), float), axis=1) / e0
    return np.zeros(2 * (n + 1)), rhs


def beam_gram_v(mesh: Mesh1D) -> sp.csr_matrix:
    """H1 x H1 Gram matrix of the (M, V) space."""
    n = mesh.n_elements
    ell = mesh.cell_lengths
    rows, cols, vals = [], [], []
    for i in range(n):
        li = ell[i]
        local = np.array([[li / 3.0, li / 6.0], [li / 6.0, li / 3.0]]) \
            + np.array([[1.0, -1.0], [-1.0, 1.0]]) / li
        for a in range(2):
            for b in range(2):
                rows.append(i + a)
                cols.append(i + b)
                vals.append(local[a, b])
    h1 = sp.coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)).tocsr()
    return sp.block_diag([h1, h1], format="csr")


def beam_gram_q(mesh: Mesh1D) -> sp.csr_matrix:
    """L2 x L2 Gram matrix of the (beta, w) space (diagonal)."""
    ell = mesh.cell_lengths
    return sp.diags(np.concatenate([ell, ell]), format="csr")


class BeamReference:
    """Separable exact-solution evaluator: elastic(x) times creep(t)."""

    def __init__(self, cfg: BeamConfig, mesh: Mesh1D, u: np.ndarray,
                 p: np.ndarray, phi: CreepFactor):
        self.cfg = cfg
        self.mesh = mesh
        n = mesh.n_elements
        self.m_coeff = u[: n + 1]
        self.v_coeff = u[n + 1:]
        self.beta_coeff = p[:n]
        self.w_coeff = p[n:]
        self.phi = phi

    def _locate(self, x):
        x = np.asarray(x, float)
        h = self.mesh.length / self.mesh.n_elements
        e = np.clip((x / h).astype(int), 0, self.mesh.n_elements - 1)
        return e, x

    def spatial(self, x):
        """Elastic fields and derivatives at positions x (dict of arrays)."""
        e, x = self._locate(x)
        x0 = self.mesh.nodes[e]
        ell = self.mesh.cell_lengths[e]
        s = (x - x0) / ell
        out = {}
        for name, coeff in (("M", self.m_coeff), ("V", self.v_coeff)):
            left, right = coeff[e], coeff[e + 1]
            out[name] = (1.0 - s) * left + s * right
            out["d" + name] = (right - left) / ell
        out["beta"] = self.beta_coeff[e]
        out["w"] = self.w_coeff[e]
        return out

    def __call__(self, x, t):
        """Field values (M, V, beta, w) at (x, t)."""
        base = self.spatial(x)
        factor = self.phi(t)
        return {k: v * factor for k, v in base.items()
                if not k.startswith("d")}


def beam_exact_reference(cfg: BeamConfig, f_space: Callable,
                         g_space: Optional[Callable], grid: TimeGrid,
                         kernel: Optional[MemoryKernel], e0: float = 1.0,
                         n_ref: int = 4096,
                         separable: bool = True) -> BeamReference:
    """Reference evaluator for a separable step load ``q(x) H(t)``.

    Solves the memory-free mixed system on a fine mesh (``n_ref``
    elements) and modulates it with the closed-form creep factor of the
    attached kernel.
    """
    if not separable:
        raise OracleError("the exact-solution oracle needs a separable step load")
    if cfg.profile == "joined" and n_ref % 2 != 0:
        n_ref += 1
    mesh = beam_mesh(cfg, n_ref)
    a = assemble_beam_a(cfg, mesh)
    b = assemble_beam_b(mesh)
    system = BlockSaddleSystem(a, b)
    f_fn = None if f_space is None else (lambda x, t: f_space(x))
    g_fn = None if g_space is None else (lambda x, t: g_space(x))
    rhs_f, rhs_g = beam_rhs(cfg, mesh, f_fn, g_fn, 0.0, e0=e0)
    u, p = system.factorization((1.0, 1.0, 1.0)).solve(rhs_f, rhs_g)
    if kernel is None:
        phi = CreepFactor(times=grid.times.copy(),
                          samples=np.ones(grid.n_steps + 1), residual=0.0,
                          exact=lambda t: np.ones_like(np.asarray(t, float)))
    else:
        phi = creep_factor(kernel, grid)
    return BeamReference(cfg, mesh, u, p, phi)


class _ErrorAccumulator:
    """Trapezoid-in-time L1 accumulation of spatial error norms."""

    def __init__(self, mesh: Mesh1D, reference: BeamReference, grid: TimeGrid):
        self.grid = grid
        self.xq, self.wq = _gauss_points(mesh, _G4)
        self.phi_basis = _p1_at(_G4)
        self.ell = mesh.cell_lengths
        self.n = mesh.n_elements
        self.ref = reference.spatial(self.xq.ravel())
        self.ref = {k: v.reshape(self.xq.shape) for k, v in self.ref.items()}
        self.phi = reference.phi
        self.e0 = {name: 0.0 for name in BEAM_FIELDS}
        self.e1 = {name: 0.0 for name in ("M", "V")}
        self._weights = trapezoid_weights(grid, grid.n_steps)

    def add_step(self, n: int, t: float, u: np.ndarray, p: np.ndarray):
        w_t = self._weights[n]
        fields = _split_fields_quad(self.n, self.phi_basis, self.ell, u, p)
        factor = float(self.phi(t))
        for name in BEAM_FIELDS:
            diff = fields[name] - factor * self.ref[name]
            l2sq = float(np.sum(self.wq * diff * diff))
            if name in self.e1:
                ddiff = fields["d" + name] - factor * self.ref["d" + name]
                h1sq = l2sq + float(np.sum(self.wq * ddiff * ddiff))
                self.e1[name] += w_t * math.sqrt(h1sq)
            self.e0[name] += w_t * math.sqrt(l2sq)

    def result(self):
        out = {}
        for name in BEAM_FIELDS:
            entry = {"e0": self.e0[name]}
            if name in self.e1:
                entry["e1"] = self.e1[name]
            out[name] = entry
        return out


def _split_fields_quad(n, phi_basis, ell, u, p):
    """Numeric field (and derivative) values at the 4-point Gauss nodes."""
    m_nodes, v_nodes = u[: n + 1], u[n + 1:]
    conn = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    out = {}
    for name, coeff in (("M", m_nodes), ("V", v_nodes)):
        nodal = coeff[conn]
        out[name] = nodal @ phi_basis.T
        out["d" + name] = ((nodal[:, 1] - nodal[:, 0]) / ell)[:, None] \
            * np.ones((1, phi_basis.shape[0]))
    out["beta"] = p[:n, None] * np.ones((1, phi_basis.shape[0]))
    out["w"] = p[n:, None] * np.ones((1, phi_basis.shape[0]))
    return out


def beam_errors(series, reference: BeamReference, grid: TimeGrid,
                mesh: Mesh1D):
    """L1-in-time errors of a stepped solution series against the oracle.

    ``series`` is an iterable of (u_n, p_n) pairs covering every node of
    the grid.  Returns e0 for all four fields and e1 for M and V.
    """
    acc = _ErrorAccumulator(mesh, reference, grid)
    count = 0
    for n, (u, p) in enumerate(series):
        acc.add_step(n, grid.times[n], u, p)
        count += 1
    if count != grid.n_steps + 1:
        raise ValueError(f"series holds {count} states, grid needs "
                         f"{grid.n_steps + 1}")
    return acc.result()


def beam_reference_norms(reference: BeamReference, grid: TimeGrid,
                         mesh: Mesh1D):
    """L1-in-time field norms of the oracle itself (for relative errors)."""
    acc = _ErrorAccumulator(mesh, reference, grid)
    zero_u = np.zeros(2 * (mesh.n_elements + 1))
    zero_p = np.zeros(2 * mesh.n_elements)
    for n, t in enumerate(grid.times):
        acc.add_step(n, t, zero_u, zero_p)
    return acc.result()


class BeamProblem:
    """One beam discretization wired to loads and a memory kernel."""

    def __init__(self, cfg: BeamConfig, n_elements: int,
                 kernel: Optional[MemoryKernel], e0: float,
                 f_space: Optional[Callable], g_space: Optional[Callable]):
        self.cfg = cfg
        self.mesh = beam_mesh(cfg, n_elements)
        self.kernel = kernel
        self.e0 = e0
        self.f_space = f_space
        self.g_space = g_space
        self.a = assemble_beam_a(cfg, self.mesh)
        self.b = assemble_beam_b(self.mesh)
        self.system = BlockSaddleSystem(self.a, self.b, k3=kernel)
        f_fn = None if f_space is None else (lambda x, t: f_space(x))
        g_fn = None if g_space is None else (lambda x, t: g_space(x))
        _, self._load_row = beam_rhs(cfg, self.mesh, f_fn, g_fn, 0.0, e0=e0)
        self.n_v = 2 * (self.mesh.n_elements + 1)
        self.n_q = 2 * self.mesh.n_elements

    @property
    def dofs(self) -> int:
        # tables index the nodal pair only
        return self.n_v

    def rhs(self, t: float):
        # unit step load: active from t = 0 on
        return np.zeros(self.n_v), self._load_row.copy()

    def run(self, grid: TimeGrid, reference: Optional[BeamReference] = None,
            audit: bool = False, collect: Optional[Callable] = None):
        """Step through the grid; returns (errors, stepper)."""
        stepper = VolterraStepper(self.system, grid, audit=audit)
        acc = None
        if reference is not None:
            acc = _ErrorAccumulator(self.mesh, reference, grid)

        def on_step(n, t, u, p):
            if acc is not None:
                acc.add_step(n, t, u, p)
            if collect is not None:
                collect(n, t, u, p)

        stepper.run(lambda t: self.rhs(t)[0], lambda t: self.rhs(t)[1],
                    on_step=on_step)
        return (acc.result() if acc is not None else None), stepper
