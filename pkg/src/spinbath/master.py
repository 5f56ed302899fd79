"""Mean-field master equation integrated through an auxiliary memory field.

The memory integral ``chi(t, u) = f(u) int_0^t W(t - t' + u) rho(t') dt'`` is
carried on a uniform ``u`` grid and evolved alongside ``rho``:

    d rho/dt = -i [H_s + E(t) + sum_mu Rbar_mu S_mu, rho]
               - sum_{mu,nu} C_{mu nu} {chi_0 S_nu S_mu + S_nu S_mu chi_0 - 2 S_mu chi_0 S_nu}
    d chi/dt = f(u) W(|u|) rho + d chi/du + 2 g u chi

with ``chi_0 = chi(t, 0)`` and ``f(u) = exp(-g u^2)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bath import bath_statistics, thermal_ensemble
from .dynamics import Dynamics
from .kernel import KernelParams, evaluate_W, kernel_params
from .model import (DIM_SYS, N_SYS, ModelConfig, build_system_hamiltonian, build_total_hamiltonian,
                    coupling_operator, initial_system_density)
from .moments import Moments, kernel_moments
from .rk8 import integrate, n_steps
from .spins import PauliString, min_eigenvalue, to_dense

log = logging.getLogger(__name__)

TRACE_FAIL = 1e-6
POSITIVITY_FAIL = 1e-6
EXACT_MOMENT_MAX_DIM = 64


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class UGrid:
    n: int
    l: int
    dt: float
    nodes: np.ndarray  # descending: nodes[0] = l*dt, nodes[l] = 0
    g: float
    D: np.ndarray

    @property
    def zero(self) -> int:
        return self.l

    @property
    def damping(self) -> np.ndarray:
        return np.exp(-self.g * self.nodes ** 2)


def sinc_dvr_derivative(nodes: np.ndarray) -> np.ndarray:
    """First-derivative matrix ``(-1)^(j-k) / (u_j - u_k)`` of the uniform-grid sinc DVR."""
    n = len(nodes)
    j = np.arange(n)
    diff = nodes[:, None] - nodes[None, :]
    sign = np.where((j[:, None] - j[None, :]) % 2, -1.0, 1.0)
    np.fill_diagonal(diff, 1.0)
    D = sign / diff
    np.fill_diagonal(D, 0.0)
    return D


def build_u_grid(n: int, dt: float) -> UGrid:
    """Grid ``u_j = (l - j) dt``, ``j = 0..n-1``, with ``l = int(0.338 n)``.

    ``l`` nodes lie above ``u = 0`` and ``n - 1 - l`` below it.
    """
    if n < 16:
        raise ValueError(f"grid needs n >= 16, got {n}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    l = int(0.338 * n)
    nodes = (l - np.arange(n)) * dt
    nodes[l] = 0.0
    g = 11.0 / ((n - l) * dt) ** 2
    return UGrid(n, l, dt, nodes, g, sinc_dvr_derivative(nodes))


@dataclass
class MasterConfig:
    model: ModelConfig
    sigma_x_mean: float
    c: float
    kernel: KernelParams
    grid_n: int = 100
    moments: Moments | None = None
    meta: dict = field(default_factory=dict)

    @property
    def coupling(self) -> np.ndarray:
        return coupling_operator()


class MasterEquation:
    """Right-hand side of the coupled ``(rho, chi)`` system.

    ``couplings`` is a stack of system operators ``S_mu``, ``r_mean`` the bath
    means ``Rbar_mu`` and ``c_matrix`` the bath covariances ``C_{mu nu}``.
    """

    def __init__(self, system, couplings, r_mean, c_matrix, kernel: KernelParams, grid: UGrid):
        self.system = system
        self.S = np.asarray(couplings, dtype=complex)
        self.r_mean = np.asarray(r_mean, dtype=float)
        self.C = np.asarray(c_matrix, dtype=complex)
        self.grid = grid
        self.kernel = kernel
        self.static = to_dense(system.static_part()) + np.einsum("m,mij->ij", self.r_mean, self.S)
        # pulses grouped by the operator they multiply
        groups: dict[tuple, list] = {}
        for term in system.terms:
            if term.envelope is None:
                continue
            env = system.envelopes[term.envelope]
            groups.setdefault(term.factors, []).append(
                (term.coefficient * env.amplitude, env.width, env.center, env.carrier))
        self.pulse_ops = np.array([to_dense(type(system)(system.n_spins, [PauliString(1.0, f)]))
                                   for f in groups]).reshape(-1, self.static.shape[0], self.static.shape[0])
        self.pulse_params = [np.array(v, dtype=float).T for v in groups.values()]
        self.source = (grid.damping * evaluate_W(kernel, grid.nodes)).astype(float)
        self.stretch = 2.0 * grid.g * grid.nodes
        # S_nu S_mu products, weighted
        self.SS = np.einsum("mn,nij,mjk->ik", self.C, self.S, self.S)
        self.pairs = [(self.C[m, n], self.S[m], self.S[n])
                      for m in range(len(self.S)) for n in range(len(self.S)) if self.C[m, n] != 0]
        self.dissipative = bool(self.pairs)

    def envelopes(self, t: float) -> np.ndarray:
        """Summed pulse envelope multiplying each entry of ``pulse_ops``."""
        return np.array([np.dot(a * np.exp(-b * (t - c) ** 2), np.cos(w * t))
                         for a, b, c, w in self.pulse_params])

    def hamiltonian(self, t: float) -> np.ndarray:
        H = self.static.copy()
        if len(self.pulse_ops):
            H += np.tensordot(self.envelopes(t), self.pulse_ops, 1)
        return H

    def dissipator(self, chi0: np.ndarray) -> np.ndarray:
        out = chi0 @ self.SS + self.SS @ chi0
        for c, Sm, Sn in self.pairs:
            out -= (2.0 * c) * (Sm @ chi0 @ Sn)
        return out

    def rhs(self, rho, chi, t):
        H = self.hamiltonian(t)
        drho = -1j * (H @ rho - rho @ H)
        if self.dissipative:
            drho -= self.dissipator(chi[self.grid.zero])
        n = self.grid.n
        # real D on the float view of chi keeps the product in BLAS
        flat = np.ascontiguousarray(chi).reshape(n, -1).view(np.float64)
        dchi = (self.grid.D @ flat).view(complex).reshape(chi.shape)
        dchi += self.stretch[:, None, None] * chi
        dchi += self.source[:, None, None] * rho
        return drho, dchi


def master_rhs(rho, chi, t, eq: MasterEquation):
    """``(d rho/dt, d chi/dt)`` for the packed auxiliary-field system."""
    return eq.rhs(rho, chi, t)


def master_equation(cfg: MasterConfig) -> MasterEquation:
    m = cfg.model
    grid = build_u_grid(cfg.grid_n, m.dt)
    system = build_system_hamiltonian(m)
    S = cfg.coupling
    return MasterEquation(system, [S], [m.lambda0 * cfg.sigma_x_mean], [[cfg.c]], cfg.kernel, grid)


def run_master(cfg: MasterConfig, *, check: bool = True,
               positivity_fail: float | None = POSITIVITY_FAIL) -> Dynamics:
    """Integrate from ``rho(0) = |100><100|``, ``chi(0, u) = 0``.

    With ``check`` set, raises ``SolverError`` if the trace drifts by more
    than ``TRACE_FAIL`` or, unless ``positivity_fail`` is None, the lowest
    eigenvalue drops below ``-positivity_fail`` at a sample.  The lowest
    eigenvalue at every sample is kept in the returned series either way.
    """
    m = cfg.model
    eq = master_equation(cfg)
    n = eq.grid.n
    y0 = np.zeros((n + 1, DIM_SYS, DIM_SYS), dtype=complex)
    y0[0] = initial_system_density()

    def deriv(t, y):
        out = np.empty_like(y)
        out[0], out[1:] = eq.rhs(y[0], y[1:], t)
        return out

    steps = n_steps(0.0, m.t_end, m.dt)
    times, rhos = [0.0], [y0[0].copy()]
    count = 0

    def observe(t, y):
        nonlocal count
        count += 1
        if count % m.sample_every and count != steps:
            return
        rho = y[0]
        if check:
            tr = np.trace(rho).real
            if abs(tr - 1.0) > TRACE_FAIL:
                raise SolverError(f"trace drift {tr - 1.0:.3e} at t = {t:.6g}")
            lo = float(min_eigenvalue(rho))
            if positivity_fail is not None and lo < -positivity_fail:
                raise SolverError(f"negative eigenvalue {lo:.3e} at t = {t:.6g} "
                                  f"(grid n={n}, dt={m.dt}, C={cfg.c:.3e})")
        times.append(t)
        rhos.append(rho.copy())

    integrate(deriv, y0, 0.0, m.t_end, m.dt, observe)
    return Dynamics(np.array(times), np.array(rhos), engine="master",
                    meta={"grid_n": n, "c": cfg.c, "sigma_x_mean": cfg.sigma_x_mean,
                          "p": cfg.kernel.p, "q": cfg.kernel.q})


def model_moments(model: ModelConfig) -> Moments:
    """Kernel moments on the bath truncated to ``moment_ns`` spins."""
    ns = min(model.n_s, model.moment_ns)
    if ns < 1:
        raise ValueError("kernel moments need at least one bath spin")
    bath = model.bath_spec().truncated(ns)
    ens = thermal_ensemble(bath, model.n_eig, model.kT)
    total = build_total_hamiltonian(model, bath)
    method = model.moment_method
    if method == "auto":
        method = "exact" if total.dim <= EXACT_MOMENT_MAX_DIM else "stochastic"
    return kernel_moments(total, ens, N_SYS, method=method, samples=model.moment_samples,
                          seed=model.seed)


def prepare_master(model: ModelConfig, *, moments: Moments | None = None) -> MasterConfig:
    """Bath statistics and kernel parameters for the model's bath."""
    bath = model.bath_spec()
    ens = thermal_ensemble(bath, model.n_eig, model.kT)
    stats = bath_statistics(ens, bath, model.c_convention)
    if model.n_s == 0 and moments is None:
        # no bath: C = 0 and the kernel only shapes an unused memory field
        kp = KernelParams(0.0, 1.0)
    else:
        moments = model_moments(model) if moments is None else moments
        kp = kernel_params(moments.aa_dag, moments.aa)
    return MasterConfig(model, stats.sigma_x_mean, stats.c, kp, model.grid_n, moments,
                        meta={"sigma_x2_mean": stats.sigma_x2_mean,
                              "truncation_ratio": ens.truncation_ratio})
