import numpy as np
import pytest
from scipy.integrate import quad

from spinbath.exact import run_exact
from spinbath.kernel import KernelParams, evaluate_W, kernel_cutoff
from spinbath.master import (MasterConfig, MasterEquation, SolverError, build_u_grid, master_equation,
                             master_rhs, model_moments, prepare_master, run_master, sinc_dvr_derivative)
from spinbath.model import ModelConfig, build_system_hamiltonian, coupling_operator, initial_system_density
from spinbath.rk8 import integrate
from spinbath.spins import to_dense

KP = KernelParams(0.2954201129577379, 5.969973004426536)


def test_grid_layout():
    g = build_u_grid(100, 0.1)
    assert g.l == 33 and g.zero == 33
    assert g.nodes[33] == 0.0
    assert g.nodes[0] == pytest.approx(3.3)
    assert g.nodes[-1] == pytest.approx(-6.6)
    assert np.allclose(np.diff(g.nodes), -0.1)
    assert g.g == pytest.approx(11 / (67 * 0.1) ** 2)
    assert g.damping[33] == 1.0
    assert np.array_equal(g.D, -g.D.T)
    assert np.all(np.diag(g.D) == 0)
    with pytest.raises(ValueError):
        build_u_grid(10, 0.1)
    with pytest.raises(ValueError):
        build_u_grid(100, 0.0)


def test_dvr_entries():
    D = sinc_dvr_derivative(np.array([0.2, 0.1, 0.0, -0.1]))
    # (-1)^(j-k) / (u_j - u_k)
    assert D[0, 1] == pytest.approx(-1 / 0.1)
    assert D[0, 2] == pytest.approx(1 / 0.2)
    assert D[3, 0] == pytest.approx(1 / 0.3)


def test_dvr_derivative_of_gaussian():
    g = build_u_grid(100, 0.1)
    u = g.nodes
    c, s = -1.65, 0.7
    f = np.exp(-((u - c) ** 2) / (2 * s * s))
    df = -(u - c) / (s * s) * f
    assert np.max(np.abs(g.D @ f - df)[5:-5]) < 1e-6


def memory_field_errors(kp, dt, n, times=(1.0, 3.0, 6.0)):
    """chi(T, 0) for scalar rho(t) = cos(2.8 t) against int_0^T W(T - s) rho(s) ds."""
    eq = master_equation(MasterConfig(ModelConfig(n_s=0, dt=dt), 0.0, 1e-4, kp, n))
    g = eq.grid

    def d(t, c):
        return g.D @ c + eq.stretch * c + eq.source * np.cos(2.8 * t)

    out = []
    for T in times:
        chi = integrate(d, np.zeros(g.n), 0.0, T, dt)
        ref = quad(lambda s: evaluate_W(kp, T - s) * np.cos(2.8 * s), 0.0, T, limit=200, epsabs=1e-14)[0]
        out.append(abs(chi[g.zero] - ref))
    return np.array(out)


def test_memory_field_gaussian_kernel_is_spectral():
    assert np.max(memory_field_errors(KernelParams(0.0, KP.q), 0.1, 100)) < 1e-7


def test_memory_field_converges_second_order():
    # W(|u|) has a slope jump at u = 0 when p > 0, which limits the DVR to O(dt^2)
    coarse = memory_field_errors(KP, 0.1, 100)
    fine = memory_field_errors(KP, 0.05, 200)
    assert np.max(coarse) < 1e-3
    assert np.all(coarse / fine > 3.5)


def test_rhs_von_neumann_limit():
    cfg = MasterConfig(ModelConfig(n_s=0), 0.0, 0.0, KP, 100)
    eq = master_equation(cfg)
    rng = np.random.default_rng(0)
    rho = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    chi = rng.standard_normal((100, 8, 8)) + 0j
    drho, _ = master_rhs(rho, chi, 10.0, eq)
    H = to_dense(build_system_hamiltonian(cfg.model), 10.0)
    assert np.max(np.abs(drho + 1j * (H @ rho - rho @ H))) < 1e-13


def test_rhs_identity_only_dissipates():
    cfg = MasterConfig(ModelConfig(n_s=0, a=0.0, b=0.03), 0.0, 1e-3, KP, 100)
    eq = master_equation(cfg)
    chi = np.random.default_rng(1).standard_normal((100, 8, 8)) + 0j
    drho, _ = eq.rhs(np.eye(8) / 8, chi, 3.0)
    S = coupling_operator()
    c0 = chi[eq.grid.zero]
    ref = -1e-3 * (S @ S @ c0 + c0 @ S @ S - 2 * S @ c0 @ S)
    assert np.max(np.abs(drho - ref)) < 1e-15


def test_rhs_trace_free_and_field_equation():
    cfg = MasterConfig(ModelConfig(n_s=0), -0.003, 1e-4, KP, 100)
    eq = master_equation(cfg)
    rng = np.random.default_rng(2)
    rho = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    chi = rng.standard_normal((100, 8, 8)) + 1j * rng.standard_normal((100, 8, 8))
    drho, dchi = eq.rhs(rho, chi, 33.0)
    assert abs(np.trace(drho)) < 1e-12
    g = eq.grid
    ref = (np.einsum("jk,kab->jab", g.D, chi) + (2 * g.g * g.nodes)[:, None, None] * chi
           + (np.exp(-g.g * g.nodes**2) * evaluate_W(KP, np.abs(g.nodes)))[:, None, None] * rho)
    assert np.max(np.abs(dchi - ref)) < 1e-12


def test_general_multi_operator_dissipator():
    # two operators with a diagonal covariance equal the sum of two single-operator terms
    cfg = MasterConfig(ModelConfig(n_s=0), 0.0, 0.0, KP, 100)
    base = master_equation(cfg)
    S = coupling_operator()
    T = np.diag(np.arange(8.0))
    grid, system = base.grid, base.system
    two = MasterEquation(system, [S, T], [0.0, 0.0], np.diag([1e-3, 2e-3]), KP, grid)
    one_s = MasterEquation(system, [S], [0.0], [[1e-3]], KP, grid)
    one_t = MasterEquation(system, [T], [0.0], [[2e-3]], KP, grid)
    c0 = np.random.default_rng(3).standard_normal((8, 8)) + 0j
    assert np.allclose(two.dissipator(c0), one_s.dissipator(c0) + one_t.dissipator(c0), atol=1e-15)


def test_zero_coupling_matches_exact():
    model = ModelConfig(n_s=0, lambda0=0.0, t_end=40.0)
    ex = run_exact(model).dynamics
    ma = run_master(MasterConfig(model, 0.0, 0.0, KP, 100))
    assert np.max(np.abs(ex.observables() - ma.observables())) < 1e-6


def volterra_oracle(model, sigma_x_mean, c, kp, T, h):
    """Trapezoid discretisation of the memory integral with a Crank-Nicolson step."""
    eq = master_equation(MasterConfig(model, sigma_x_mean, c, kp, 100))
    I = np.eye(8)
    S = coupling_operator()
    SS = S @ S
    Dis = c * (np.kron(SS, I) + np.kron(I, SS.T) - 2 * np.kron(S, S.T))

    def L(t):
        H = eq.hamiltonian(t)
        return -1j * (np.kron(H, I) - np.kron(I, H.T))

    N = int(round(T / h))
    K = int(np.ceil(kernel_cutoff(kp) / h)) + 1
    W = evaluate_W(kp, np.arange(max(N, K) + 1) * h)
    rho = np.zeros((N + 1, 64), dtype=complex)
    rho[0] = initial_system_density().ravel()
    L0, chi0 = L(0.0), np.zeros(64, dtype=complex)
    for n in range(N):
        L1 = L((n + 1) * h)
        ks = np.arange(max(1, n + 1 - K), n + 1)
        hist = h * (W[n + 1 - ks] @ rho[ks]) + (0.5 * h * W[n + 1] * rho[0] if n + 1 <= K else 0)
        rhs = rho[n] + 0.5 * h * (L0 @ rho[n] - Dis @ chi0) - 0.5 * h * (Dis @ hist)
        rho[n + 1] = np.linalg.solve(np.eye(64) - 0.5 * h * (L1 - 0.5 * h * W[0] * Dis), rhs)
        chi0 = hist + 0.5 * h * W[0] * rho[n + 1]
        L0 = L1
    return rho[-1].reshape(8, 8)


def test_against_volterra_oracle():
    model = ModelConfig(n_s=0, t_end=2.0, sample_every=1)
    sx, c = -0.0031, 1.1e-4
    coarse = volterra_oracle(model, sx, c, KP, 2.0, 0.002)
    fine = volterra_oracle(model, sx, c, KP, 2.0, 0.001)
    ref = (4 * fine - coarse) / 3
    dyn = run_master(MasterConfig(model, sx, c, KP, 100), check=False)
    assert np.max(np.abs(dyn.rho[-1] - ref)) < 1e-6


def test_memoryless_limit_is_linear_in_c():
    model = ModelConfig(n_s=0, t_end=30.0)
    base = run_master(MasterConfig(model, 0.0, 0.0, KP, 100)).rho
    d1 = np.max(np.abs(run_master(MasterConfig(model, 0.0, 1e-4, KP, 100), check=False).rho - base))
    d2 = np.max(np.abs(run_master(MasterConfig(model, 0.0, 5e-5, KP, 100), check=False).rho - base))
    assert d1 / d2 == pytest.approx(2.0, rel=1e-2)


def test_hermiticity_and_trace_kept():
    model = ModelConfig(n_s=0, t_end=30.0)
    dyn = run_master(MasterConfig(model, -0.003, 1e-4, KP, 100), check=False)
    assert np.max(np.abs(dyn.trace - 1)) < 1e-8
    assert np.max(dyn.hermiticity_error) < 1e-10
    assert dyn.engine == "master"


def test_positivity_failure_reported():
    # the full-coupling equation dips below -1e-6 within the first pulse
    cfg = prepare_master(ModelConfig(n_s=8, t_end=12.0))
    with pytest.raises(SolverError, match="negative eigenvalue"):
        run_master(cfg)
    dyn = run_master(cfg, positivity_fail=None)
    assert dyn.min_eig.min() < -1e-6


def test_model_moments_method_choice():
    m = model_moments(ModelConfig(n_s=4))
    assert m.method == "exact"
    s = model_moments(ModelConfig(n_s=4, moment_ns=4, moment_samples=50))
    assert s.method == "stochastic" and s.samples == 50
    with pytest.raises(ValueError):
        model_moments(ModelConfig(n_s=0))


def test_prepare_master_uses_bath_statistics():
    mc = prepare_master(ModelConfig(n_s=8))
    assert mc.c == pytest.approx(0.00011031361114386318, rel=1e-6)
    assert mc.sigma_x_mean == pytest.approx(-0.003106609732614709, rel=1e-6)
    assert mc.kernel.p == pytest.approx(KP.p, rel=1e-9)
    assert mc.meta["truncation_ratio"] > 0


def test_prepare_master_without_bath():
    mc = prepare_master(ModelConfig(n_s=0))
    assert mc.c == 0.0 and mc.sigma_x_mean == 0.0 and mc.moments is None
