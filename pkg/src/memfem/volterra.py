"""Time stepping for block saddle-point systems with Volterra memory.

At each time node the scheme solves

    g1 A u_n + g2 B^T p_n = f_n + sum_{j<n} w_{n,j} [k1(t_n,t_j) A u_j
                                                   + k2(t_n,t_j) B^T p_j],
    g3 B u_n             = g_n + sum_{j<n} w_{n,j} k3(t_n,t_j) B u_j,

where the w are composite trapezoid weights on [0, t_n], the current-time
quadrature term has been moved to the left as the scalar block scaling
``g_i = 1 - w_{n,n} k_i(t_n, t_n)``, and step 0 is the memory-free solve
with data (f_0, g_0) (Volterra equations of the second kind need no
initial condition).  Scheme well-posedness requires the stability gate
``|w_{n,n} k(t_n, t_n)| < 1`` for every attached kernel.

History sums are evaluated on raw stored vectors (one matrix-vector
product per block per step); kernels with convolution structure support
an O(1) exponential recurrence in place of direct summation, and both
paths can be audited against each other.

The module also evaluates the closed-form stability and error constants
of the underlying well-posedness theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import StabilityGateError
from .kernels import MemoryKernel
from .sparsela import SaddleFactorization, as_csr, factorize_saddle

__all__ = [
    "TimeGrid",
    "BlockSaddleSystem",
    "HistoryBuffer",
    "VolterraStepper",
    "StabilityConstants",
    "ErrorConstants",
    "trapezoid_weights",
    "step",
    "step_gammas",
    "history_sum",
    "stability_constants",
    "error_constants",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into ``n_steps`` steps."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"need n_steps >= 1, got {self.n_steps}")
        if not self.T > 0.0:
            raise ValueError(f"need T > 0, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.T * np.arange(self.n_steps + 1) / self.n_steps


def trapezoid_weights(grid: TimeGrid, n: int) -> np.ndarray:
    """Composite trapezoid weights for [0, t_n] over nodes t_0..t_n.

    ``n = 0`` yields a single zero weight (empty integration interval).
    """
    if not 0 <= n <= grid.n_steps:
        raise IndexError(f"step index {n} outside 0..{grid.n_steps}")
    if n == 0:
        return np.zeros(1)
    w = np.full(n + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


class BlockSaddleSystem:
    """Sparse blocks A (n_v x n_v), B (n_q x n_v) with kernel attachments.

    A must be symmetric (checked to 1e-12 entrywise on construction) and
    positive semi-definite; B must have full row rank.  Each of the three
    kernel slots is a :class:`MemoryKernel` or None (absent).
    """

    SYMMETRY_TOL = 1e-12

    def __init__(self, a, b, k1: Optional[MemoryKernel] = None,
                 k2: Optional[MemoryKernel] = None,
                 k3: Optional[MemoryKernel] = None):
        self.a = as_csr(a)
        self.b = as_csr(b)
        if self.a.shape[0] != self.a.shape[1]:
            raise ValueError(f"A must be square, got {self.a.shape}")
        if self.b.shape[1] != self.a.shape[0]:
            raise ValueError(
                f"B columns {self.b.shape[1]} != A size {self.a.shape[0]}")
        asym = abs(self.a - self.a.T)
        max_asym = asym.max() if asym.nnz else 0.0
        if max_asym >= self.SYMMETRY_TOL:
            raise ValueError(f"A is not symmetric: max |A - A^T| = {max_asym:.3e}")
        self.k1 = k1
        self.k2 = k2
        self.k3 = k3
        self._factor_cache: dict[tuple, SaddleFactorization] = {}

    @property
    def n_v(self) -> int:
        return self.a.shape[0]

    @property
    def n_q(self) -> int:
        return self.b.shape[0]

    @property
    def kernels(self):
        return (self.k1, self.k2, self.k3)

    def factorization(self, gammas) -> SaddleFactorization:
        """Factor for the given gamma triple, cached across steps."""
        key = tuple(float(g) for g in gammas)
        fact = self._factor_cache.get(key)
        if fact is None:
            fact = factorize_saddle(self.a, self.b, *key)
            self._factor_cache[key] = fact
        return fact


class HistoryBuffer:
    """Stored past (u_j, p_j) plus optional exponential-sum accumulators.

    Accumulators are keyed by the convolution parameters ``(c, rate)``
    and the vector family ("u" or "p"); each holds

        U_k = sum_{j<=k} dt * c * exp(-rate (t_k - t_j)) x_j

    after the k-th append, updated in O(1) per step.
    """

    def __init__(self, grid: TimeGrid, store_full: bool = True):
        self.grid = grid
        self.store_full = store_full
        self.us: list[np.ndarray] = []
        self.ps: list[np.ndarray] = []
        self._count = 0
        self._first: dict[str, np.ndarray] = {}
        self._acc: dict[tuple, np.ndarray] = {}
        self.audit_max_rel = 0.0
        self.audit_steps = 0

    def __len__(self) -> int:
        return self._count

    def attach_recurrence(self, kernel: MemoryKernel, which: str) -> None:
        """Register an accumulator for an exponential kernel."""
        if not kernel.is_exp:
            raise ValueError("recurrence accumulators need an exponential kernel")
        if which not in ("u", "p"):
            raise ValueError(f"unknown vector family {which!r}")
        key = (kernel.c, kernel.rate, which)
        if key not in self._acc and self._count:
            raise ValueError("attach recurrence before the first append")
        self._acc.setdefault(key, None)

    def append(self, u: np.ndarray, p: np.ndarray) -> None:
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        dt = self.grid.dt
        for which, x in (("u", u), ("p", p)):
            if self._count == 0:
                self._first[which] = x.copy()
            for key in self._acc:
                c, rate, fam = key
                if fam != which:
                    continue
                if self._acc[key] is None:
                    self._acc[key] = dt * c * x
                else:
                    self._acc[key] = math.exp(-rate * dt) * self._acc[key] + dt * c * x
        if self.store_full:
            self.us.append(u.copy())
            self.ps.append(p.copy())
        self._count += 1

    def first(self, which: str) -> np.ndarray:
        return self._first[which]

    def vectors(self, which: str) -> list[np.ndarray]:
        if not self.store_full:
            raise ValueError("history vectors were not stored (store_full=False)")
        return self.us if which == "u" else self.ps

    def accumulator(self, kernel: MemoryKernel, which: str) -> np.ndarray:
        key = (kernel.c, kernel.rate, which)
        if key not in self._acc:
            raise ValueError("no recurrence accumulator attached for this kernel")
        return self._acc[key]

    def record_audit(self, rel: float) -> None:
        self.audit_max_rel = max(self.audit_max_rel, rel)
        self.audit_steps += 1


def history_sum(hist: HistoryBuffer, kernel: MemoryKernel, grid: TimeGrid,
                n: int, which: str, mode: str = "auto") -> np.ndarray:
    """Weighted history sum ``sum_{j<n} w_{n,j} k(t_n, t_j) x_j``.

    ``mode`` is "direct", "recurrence", or "auto" (recurrence whenever an
    accumulator is available for this kernel).  The recurrence applies
    the trapezoid endpoint correction

        sum = exp(-rate dt) U_{n-1} - (dt/2) k(t_n, t_0) x_0

    and is only defined at the current head of the buffer (n == len).
    """
    if n < 1:
        raise ValueError("history sums start at step 1")
    if mode not in ("auto", "direct", "recurrence"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "recurrence" and not kernel.is_exp:
        raise ValueError("recurrence mode requires an exponential kernel")
    if mode == "auto":
        key = (kernel.c, kernel.rate, which) if kernel.is_exp else None
        mode = "recurrence" if key in hist._acc else "direct"

    times = grid.times
    if mode == "recurrence":
        if n != len(hist):
            raise ValueError(
                f"recurrence sum only available at the buffer head "
                f"(n={n}, stored={len(hist)})")
        acc = hist.accumulator(kernel, which)
        x0 = hist.first(which)
        decay = math.exp(-kernel.rate * grid.dt)
        head = kernel.c * math.exp(-kernel.rate * times[n])
        return decay * acc - 0.5 * grid.dt * head * x0

    xs = hist.vectors(which)[:n]
    w = trapezoid_weights(grid, n)[:n]
    kv = np.asarray(kernel.eval(times[n], times[:n]), dtype=float)
    coeff = w * kv
    out = np.zeros_like(xs[0])
    for cj, xj in zip(coeff, xs):
        if cj != 0.0:
            out += cj * xj
    return out


def step_gammas(sys: BlockSaddleSystem, grid: TimeGrid, n: int):
    """Left-hand block scalings for step n, enforcing the stability gate."""
    w_nn = 0.0 if n == 0 else 0.5 * grid.dt
    t_n = grid.times[n]
    gammas = []
    for kernel in sys.kernels:
        if kernel is None:
            gammas.append(1.0)
            continue
        k_nn = float(kernel.eval(t_n, t_n))
        if abs(w_nn * k_nn) >= 1.0:
            bound = kernel.bound if kernel.bound > 0 else abs(k_nn)
            raise StabilityGateError(
                f"dt too large for kernel: |w_nn k(t_n,t_n)| = "
                f"{abs(w_nn * k_nn):.4g} >= 1 at step {n}; "
                f"choose dt < {2.0 / bound:.4g} (2/C_k)")
        gammas.append(1.0 - w_nn * k_nn)
    return tuple(gammas)


def step(sys: BlockSaddleSystem, grid: TimeGrid, n: int, hist: HistoryBuffer,
         f_n: np.ndarray, g_n: np.ndarray, mode: str = "auto",
         audit: bool = False):
    """Advance one step: solve the implicit trapezoid system and append.

    Requires the history to be complete through step ``n - 1``.  With
    ``audit=True`` the direct and recurrence history sums are both
    evaluated and their relative deviation recorded on the buffer.
    """
    if len(hist) != n:
        raise ValueError(f"history holds {len(hist)} entries, expected {n}")
    gammas = step_gammas(sys, grid, n)

    def summed(kernel, which):
        s = history_sum(hist, kernel, grid, n, which, mode=mode)
        if audit and kernel.is_exp:
            other = history_sum(hist, kernel, grid, n, which, mode="direct")
            denom = float(np.max(np.abs(other)))
            rel = float(np.max(np.abs(s - other))) / (denom + 1e-300)
            hist.record_audit(rel)
        return s

    rhs_f = np.array(f_n, dtype=float, copy=True)
    rhs_g = np.array(g_n, dtype=float, copy=True)
    if n >= 1:
        if sys.k1 is not None:
            rhs_f += sys.a @ summed(sys.k1, "u")
        if sys.k2 is not None:
            rhs_f += sys.b.T @ summed(sys.k2, "p")
        if sys.k3 is not None:
            rhs_g += sys.b @ summed(sys.k3, "u")

    fact = sys.factorization(gammas)
    u_n, p_n = fact.solve(rhs_f, rhs_g)
    hist.append(u_n, p_n)
    return u_n, p_n


class VolterraStepper:
    """Single-owner driver object for stepping a system through a grid."""

    def __init__(self, sys: BlockSaddleSystem, grid: TimeGrid,
                 mode: str = "auto", audit: bool = False,
                 store_full: Optional[bool] = None):
        self.sys = sys
        self.grid = grid
        self.mode = mode
        self.audit = audit
        all_exp = all(k is None or k.is_exp for k in sys.kernels)
        if store_full is None:
            store_full = audit or not all_exp or mode == "direct"
        self.hist = HistoryBuffer(grid, store_full=store_full)
        if mode in ("auto", "recurrence"):
            for kernel, which in ((sys.k1, "u"), (sys.k2, "p"), (sys.k3, "u")):
                if kernel is not None and kernel.is_exp:
                    self.hist.attach_recurrence(kernel, which)
        self._n = 0

    @property
    def n_done(self) -> int:
        return self._n

    def advance(self, f_n: np.ndarray, g_n: np.ndarray):
        u, p = step(self.sys, self.grid, self._n, self.hist, f_n, g_n,
                    mode=self.mode, audit=self.audit)
        self._n += 1
        return u, p

    def run(self, f_of_t: Callable, g_of_t: Callable,
            on_step: Optional[Callable] = None):
        """Step through the whole grid, calling ``on_step(n, t, u, p)``."""
        for n, t in enumerate(self.grid.times):
            u, p = self.advance(f_of_t(t), g_of_t(t))
            if on_step is not None:
                on_step(n, t, u, p)
        return self


# ---------------------------------------------------------------------------
# Closed-form stability and error constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityConstants:
    """Data-dependence constants of the continuous well-posedness bound.

    The bound reads ``||u||_{L1(V)} + ||p||_{L1(Q)} <=
    (C1 + C3) ||f||_{L1(V')} + (C2 + C4) ||g||_{L1(Q')}``.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    alpha0: float
    beta: float
    norm_a: float
    c_k1: float
    c_k2: float
    c_k3: float
    c_ktilde: float
    T: float


def _check_constant_inputs(alpha0, beta, norm_a, cks, T):
    if not alpha0 > 0.0:
        raise ValueError(f"alpha0 must be positive, got {alpha0!r}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if norm_a < 0.0 or any(c < 0.0 for c in cks):
        raise ValueError("operator norm and kernel bounds must be nonnegative")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T!r}")


def stability_constants(alpha0: float, beta: float, norm_a: float,
                        c_k1: float, c_k2: float, c_k3: float,
                        c_ktilde: float, T: float) -> StabilityConstants:
    """Evaluate the four stability constants exactly as printed.

    With ``D = (||a||/alpha0) C_ktilde + C_k3``:

        C1 = (1/alpha0) [1 + T D e^{T D}]
        C2 = (1/beta) [1 + ||a||/alpha0] [1 + T D e^{T D}]
        C3 = 1 + C_k2 e^{T C_k2} + C1 ||a|| [1 + C_k1
                                             + C_k2 e^{T C_k2}(1 + T C_k1)]
        C4 = C2 ||a|| [1 + C_k1 + C_k2 e^{T C_k2}(1 + T C_k1)]
    """
    _check_constant_inputs(alpha0, beta, norm_a, (c_k1, c_k2, c_k3, c_ktilde), T)
    d = (norm_a / alpha0) * c_ktilde + c_k3
    growth = 1.0 + T * d * math.exp(T * d)
    bracket = 1.0 + c_k1 + c_k2 * math.exp(T * c_k2) * (1.0 + T * c_k1)
    c1 = growth / alpha0
    c2 = (1.0 / beta) * (1.0 + norm_a / alpha0) * growth
    c3 = 1.0 + c_k2 * math.exp(T * c_k2) + c1 * norm_a * bracket
    c4 = c2 * norm_a * bracket
    return StabilityConstants(c1=c1, c2=c2, c3=c3, c4=c4, alpha0=alpha0,
                              beta=beta, norm_a=norm_a, c_k1=c_k1, c_k2=c_k2,
                              c_k3=c_k3, c_ktilde=c_ktilde, T=T)


@dataclass(frozen=True)
class ErrorConstants:
    """Constants of the semi-discrete quasi-optimality estimate.

    The estimate reads ``||e_u|| + ||e_p|| <= (C1u + C2u) inf ||u - v||
    + (C1p + C2p) inf ||p - q||`` in L1-in-time norms.
    """

    c1s: float
    c2s: float
    c3s: float
    c4s: float
    c1u: float
    c1p: float
    c2u: float
    c2p: float
    alpha0_star: float
    beta_star: float
    norm_a: float
    norm_b: float
    c_k1: float
    c_k2: float
    c_k3: float
    c_ktilde: float
    T: float


def error_constants(alpha0_star: float, beta_star: float, norm_a: float,
                    norm_b: float, c_k1: float, c_k2: float, c_k3: float,
                    c_ktilde: float, T: float) -> ErrorConstants:
    """Starred constants and the derived error-estimate coefficients.

    The starred block mirrors the stability constants with the discrete
    ellipticity and inf-sup constants; then, with
    ``m = 1 + T max(C_k1, C_k2)``:

        C1u = C1* m ||a|| + C2* ||b|| (1 + C_k3) + 1
        C1p = C1* m ||b||
        C2u = C3* m ||a|| + C4* ||b|| (1 + C_k3)
        C2p = C3* m ||b|| + 1
    """
    _check_constant_inputs(alpha0_star, beta_star, norm_a,
                           (norm_b, c_k1, c_k2, c_k3, c_ktilde), T)
    base = stability_constants(alpha0_star, beta_star, norm_a,
                               c_k1, c_k2, c_k3, c_ktilde, T)
    c1s, c2s, c3s, c4s = base.c1, base.c2, base.c3, base.c4
    m = 1.0 + T * max(c_k1, c_k2)
    c1u = c1s * m * norm_a + c2s * norm_b * (1.0 + c_k3) + 1.0
    c1p = c1s * m * norm_b
    c2u = c3s * m * norm_a + c4s * norm_b * (1.0 + c_k3)
    c2p = c3s * m * norm_b + 1.0
    return ErrorConstants(c1s=c1s, c2s=c2s, c3s=c3s, c4s=c4s, c1u=c1u,
                          c1p=c1p, c2u=c2u, c2p=c2p, alpha0_star=alpha0_star,
                          beta_star=beta_star, norm_a=norm_a, norm_b=norm_b,
                          c_k1=c_k1, c_k2=c_k2, c_k3=c_k3, c_ktilde=c_ktilde,
                          T=T)
