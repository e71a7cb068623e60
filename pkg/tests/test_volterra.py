import math

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from memfem.errors import StabilityGateError
from memfem.kernels import MemoryKernel, PronySLS, beam_kernel, fickian_kernel
from memfem.volterra import (
    BlockSaddleSystem,
    HistoryBuffer,
    TimeGrid,
    VolterraStepper,
    error_constants,
    history_sum,
    stability_constants,
    step,
    step_gammas,
    trapezoid_weights,
)


def scalar_system(k3=None):
    a = sp.csr_matrix(np.array([[1.0]]))
    b = sp.csr_matrix(np.array([[1.0]]))
    return BlockSaddleSystem(a, b, k3=k3)


def test_timegrid_basic():
    grid = TimeGrid(T=2.0, n_steps=4)
    assert grid.dt == 0.5
    assert_array_equal(grid.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        TimeGrid(T=1.0, n_steps=0)
    with pytest.raises(ValueError):
        TimeGrid(T=0.0, n_steps=3)


def test_trapezoid_weights():
    grid = TimeGrid(T=1.0, n_steps=2)
    assert_allclose(trapezoid_weights(grid, 2), [0.25, 0.5, 0.25], rtol=1e-15)
    assert_array_equal(trapezoid_weights(grid, 0), [0.0])
    beam_grid = TimeGrid(T=0.003, n_steps=1)
    assert_allclose(trapezoid_weights(beam_grid, 1), [0.0015, 0.0015], rtol=1e-15)
    with pytest.raises(IndexError):
        trapezoid_weights(grid, 3)
    with pytest.raises(IndexError):
        trapezoid_weights(grid, -1)


def test_system_rejects_asymmetric_a():
    a = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    b = sp.csr_matrix(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError, match="symmetric"):
        BlockSaddleSystem(a, b)


def test_step_hand_solvable_system():
    a = sp.identity(2, format="csr")
    b = sp.csr_matrix(np.array([[1.0, 0.0]]))
    sys = BlockSaddleSystem(a, b)
    grid = TimeGrid(T=1.0, n_steps=2)
    hist = HistoryBuffer(grid)
    u, p = step(sys, grid, 0, hist, np.array([1.0, 0.0]), np.array([1.0]))
    assert_allclose(u, [1.0, 0.0], atol=1e-14)
    assert_allclose(p, [0.0], atol=1e-14)
    assert len(hist) == 1


def test_zero_kernel_reduces_to_stationary_solve():
    rng = np.random.RandomState(0)
    n, m = 12, 5
    r = rng.standard_normal((n, n))
    a = sp.csr_matrix(r @ r.T + n * np.eye(n))
    b = sp.csr_matrix(rng.standard_normal((m, n)))
    sys = BlockSaddleSystem(a, b)
    grid = TimeGrid(T=1.0, n_steps=6)
    stepper = VolterraStepper(sys, grid)
    fact = sys.factorization((1.0, 1.0, 1.0))
    for t in grid.times:
        f = np.sin(t + np.arange(n, dtype=float))
        g = np.cos(t + np.arange(m, dtype=float))
        u, p = stepper.advance(f, g)
        u_ref, p_ref = fact.solve(f, g)
        assert np.max(np.abs(u - u_ref)) <= 1e-12 * max(1.0, np.max(np.abs(u_ref)))
        assert np.max(np.abs(p - p_ref)) <= 1e-12 * max(1.0, np.max(np.abs(p_ref)))


def test_gamma_values_fickian():
    sys = scalar_system(k3=fickian_kernel(0.01))
    grid = TimeGrid(T=4.5, n_steps=3000)  # dt = 0.0015
    gammas = step_gammas(sys, grid, 1)
    assert_allclose(gammas[2], 0.925, rtol=1e-12)
    assert gammas[0] == 1.0 and gammas[1] == 1.0
    assert step_gammas(sys, grid, 0) == (1.0, 1.0, 1.0)


def test_stability_gate_violation():
    sys = scalar_system(k3=fickian_kernel(0.01))
    grid = TimeGrid(T=1.0, n_steps=33)  # dt ~ 0.0303 >= 2 delta
    hist = HistoryBuffer(grid)
    step(sys, grid, 0, hist, np.zeros(1), np.ones(1))
    with pytest.raises(StabilityGateError, match="dt too large"):
        step(sys, grid, 1, hist, np.zeros(1), np.ones(1))


def test_history_sum_single_panel_constant_kernel():
    grid = TimeGrid(T=1.0, n_steps=4)
    hist = HistoryBuffer(grid)
    const = MemoryKernel.exp_convolution(c=3.0, rate=0.0)
    x0 = np.array([2.0, -1.0])
    hist.append(x0, np.zeros(1))
    out = history_sum(hist, const, grid, 1, "u", mode="direct")
    assert_allclose(out, 0.5 * grid.dt * 3.0 * x0, rtol=1e-15)


def test_history_sum_zero_kernel():
    grid = TimeGrid(T=1.0, n_steps=4)
    hist = HistoryBuffer(grid)
    zero = MemoryKernel.exp_convolution(c=0.0, rate=1.0)
    for _ in range(3):
        hist.append(np.ones(3), np.zeros(1))
    assert_array_equal(history_sum(hist, zero, grid, 3, "u", mode="direct"),
                       np.zeros(3))


def test_history_sum_recurrence_matches_direct():
    rng = np.random.RandomState(4)
    grid = TimeGrid(T=2.0, n_steps=60)
    kernel = MemoryKernel.exp_convolution(c=-0.8, rate=1.7)
    hist = HistoryBuffer(grid)
    hist.attach_recurrence(kernel, "u")
    for n in range(51):
        if n >= 1:
            direct = history_sum(hist, kernel, grid, n, "u", mode="direct")
            recur = history_sum(hist, kernel, grid, n, "u", mode="recurrence")
            denom = np.max(np.abs(direct))
            assert np.max(np.abs(direct - recur)) <= 1e-12 * max(denom, 1e-30)
        hist.append(rng.standard_normal(7), np.zeros(1))


def test_history_sum_mode_errors():
    grid = TimeGrid(T=1.0, n_steps=4)
    hist = HistoryBuffer(grid)
    general = MemoryKernel.from_callable(lambda t, s: np.ones_like(np.asarray(s, float)),
                                         bound=1.0)
    hist.append(np.ones(2), np.zeros(1))
    with pytest.raises(ValueError, match="exponential"):
        history_sum(hist, general, grid, 1, "u", mode="recurrence")
    with pytest.raises(ValueError):
        history_sum(hist, general, grid, 0, "u")


def test_scalar_stepper_tracks_creep_factor_second_order():
    # the B-row of the 1x1 saddle system is exactly the scalar Volterra
    # equation of the creep factor, so the stepper error at T must decay
    # at the trapezoid rate
    kernel = beam_kernel(PronySLS(1.0, 1.0, 1.0))
    exact_T = 2.0 / 3.0 + np.exp(-3.0 * 2.0) / 3.0
    errs = []
    for n_steps in (50, 100, 200):
        sys = scalar_system(k3=kernel)
        grid = TimeGrid(T=2.0, n_steps=n_steps)
        stepper = VolterraStepper(sys, grid)
        for t in grid.times:
            u, _ = stepper.advance(np.zeros(1), np.ones(1))
        errs.append(abs(u[0] - exact_T))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_stepper_audit_recurrence_vs_direct():
    kernel = beam_kernel(PronySLS(1.0, 1.0, 1.0))
    sys = scalar_system(k3=kernel)
    grid = TimeGrid(T=2.0, n_steps=200)
    stepper = VolterraStepper(sys, grid, audit=True)
    stepper.run(lambda t: np.zeros(1), lambda t: np.ones(1))
    assert stepper.hist.audit_steps == 200
    assert stepper.hist.audit_max_rel <= 1e-12


def test_stepper_direct_and_recurrence_paths_agree():
    kernel = MemoryKernel.exp_convolution(c=-0.6, rate=1.2)
    rng = np.random.RandomState(17)
    n, m = 8, 3
    r = rng.standard_normal((n, n))
    a = sp.csr_matrix(r @ r.T + n * np.eye(n))
    b = sp.csr_matrix(rng.standard_normal((m, n)))
    grid = TimeGrid(T=1.5, n_steps=40)

    def run(mode):
        sys = BlockSaddleSystem(a, b, k1=kernel, k3=kernel)
        stepper = VolterraStepper(sys, grid, mode=mode)
        out = []
        stepper.run(lambda t: np.full(n, math.sin(t)),
                    lambda t: np.full(m, math.cos(t)),
                    on_step=lambda nn, t, u, p: out.append((u.copy(), p.copy())))
        return out

    direct = run("direct")
    recur = run("auto")
    for (ud, pd), (ur, pr) in zip(direct, recur):
        assert np.max(np.abs(ud - ur)) <= 1e-11 * max(1.0, np.max(np.abs(ud)))
        assert np.max(np.abs(pd - pr)) <= 1e-11 * max(1.0, np.max(np.abs(pd)))


def test_stability_constants_zero_kernels():
    out = stability_constants(alpha0=0.5, beta=0.25, norm_a=2.0,
                              c_k1=0.0, c_k2=0.0, c_k3=0.0, c_ktilde=0.0, T=3.0)
    assert out.c1 == 1.0 / 0.5
    assert out.c2 == (1.0 / 0.25) * (1.0 + 2.0 / 0.5)
    assert out.c3 == 1.0 + 2.0 * out.c1
    assert out.c4 == 2.0 * out.c2
    unit = stability_constants(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    assert (unit.c1, unit.c2, unit.c3, unit.c4) == (1.0, 2.0, 2.0, 2.0)


def test_stability_constants_single_exponential():
    out = stability_constants(alpha0=1.0, beta=1.0, norm_a=1.0,
                              c_k1=0.0, c_k2=0.0, c_k3=0.0, c_ktilde=1.0, T=1.0)
    assert_allclose(out.c1, 1.0 + math.e, rtol=1e-15)


def test_stability_constants_validation():
    with pytest.raises(ValueError):
        stability_constants(0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        stability_constants(1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        stability_constants(1.0, 1.0, 1.0, -0.1, 0.0, 0.0, 0.0, 1.0)


def test_constants_monotone_in_horizon():
    rng = np.random.RandomState(23)
    for _ in range(100):
        alpha0, beta = np.exp(rng.uniform(-1, 1, size=2))
        norm_a = np.exp(rng.uniform(-1, 1))
        cks = rng.uniform(0.0, 1.5, size=4)
        T = rng.uniform(0.1, 2.0)
        lo = stability_constants(alpha0, beta, norm_a, *cks, T)
        hi = stability_constants(alpha0, beta, norm_a, *cks, 2.0 * T)
        assert hi.c1 >= lo.c1 and hi.c2 >= lo.c2
        assert hi.c3 >= lo.c3 and hi.c4 >= lo.c4


def test_error_constants_zero_kernels():
    out = error_constants(alpha0_star=2.0, beta_star=0.5, norm_a=3.0,
                          norm_b=1.5, c_k1=0.0, c_k2=0.0, c_k3=0.0,
                          c_ktilde=0.0, T=1.0)
    assert out.c1u == out.c1s * 3.0 + out.c2s * 1.5 + 1.0
    assert out.c1p == out.c1s * 1.5
    assert out.c2u == out.c3s * 3.0 + out.c4s * 1.5
    assert out.c2p == out.c3s * 1.5 + 1.0


def test_error_constants_unit_inputs_frozen():
    # frozen from an independent evaluation of the printed formulas
    out = error_constants(alpha0_star=1.0, beta_star=1.0, norm_a=1.0,
                          norm_b=1.0, c_k1=1.0, c_k2=1.0, c_k3=1.0,
                          c_ktilde=0.0, T=1.0)
    assert_allclose(out.c1s, 3.718281828459045, rtol=1e-15)
    assert_allclose(out.c2s, 7.43656365691809, rtol=1e-15)
    assert_allclose(out.c3s, 31.369521340156524, rtol=1e-15)
    assert_allclose(out.c4s, 55.30247902339496, rtol=1e-15)
    assert_allclose(out.c1u, 23.30969097075427, rtol=1e-15)
    assert_allclose(out.c1p, 7.43656365691809, rtol=1e-15)
    assert_allclose(out.c2u, 173.34400072710298, rtol=1e-15)
    assert_allclose(out.c2p, 63.73904268031305, rtol=1e-15)
    assert out.c1u > out.c1p
