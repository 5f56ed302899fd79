"""Exact benchmark: Schroedinger propagation of every thermally weighted bath eigenstate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathEnsemble, BathSpec, thermal_ensemble
from .dynamics import Dynamics
from .model import DIM_SYS, N_SYS, ModelConfig, build_total_hamiltonian, initial_states
from .rk8 import IntegrationError, integrate, n_steps
from .spins import apply_hamiltonian, reduced_system_density

NORM_FAIL = 1e-6
MAX_WORK = 5e10  # amplitude-steps: dim * n_eig * steps


@dataclass
class ExactResult:
    dynamics: Dynamics
    per_state: np.ndarray  # (n_t, n_eig, 8, 8) reduced densities of each |psi_m>
    weights: np.ndarray
    energies: np.ndarray
    bath: BathSpec


def run_exact(cfg: ModelConfig, *, bath: BathSpec | None = None,
              ensemble: BathEnsemble | None = None, max_work: float = MAX_WORK) -> ExactResult:
    """Propagate ``|100> (x) |m>`` for every retained ``m`` and average the reduced densities.

    All ``n_eig`` trajectories are advanced together as columns of one array;
    each column evolves independently so this is identical to separate runs.
    """
    bath = cfg.bath_spec() if bath is None else bath
    ensemble = thermal_ensemble(bath, cfg.n_eig, cfg.kT) if ensemble is None else ensemble
    ham = build_total_hamiltonian(cfg, bath)
    steps = n_steps(0.0, cfg.t_end, cfg.dt)
    work = float(ham.dim) * ensemble.n_eig * steps
    if work > max_work:
        raise ValueError(f"exact run needs {work:.3g} amplitude-steps > budget {max_work:.3g}")

    psi0 = initial_states(cfg, ensemble)
    weights = ensemble.weights

    def deriv(t, psi):
        out = apply_hamiltonian(ham, t, psi)
        out *= -1j
        return out

    times = [0.0]
    per_state = [reduced_system_density(psi0, N_SYS)]
    norm_err = [float(np.max(np.abs(np.linalg.norm(psi0, axis=0) - 1.0)))]
    count = 0

    def observe(t, psi):
        nonlocal count
        count += 1
        if count % cfg.sample_every and count != steps:
            return
        norms = np.linalg.norm(psi, axis=0)
        dev = np.abs(norms - 1.0)
        if np.max(dev) > NORM_FAIL:
            m = int(np.argmax(dev))
            raise IntegrationError(f"norm drift {dev[m]:.3e} in trajectory m={m}", t)
        times.append(t)
        per_state.append(reduced_system_density(psi, N_SYS))
        norm_err.append(float(np.max(dev)))

    integrate(deriv, psi0, 0.0, cfg.t_end, cfg.dt, observe)

    per_state = np.array(per_state)
    # ordered sum over m
    rho = np.zeros((len(times), DIM_SYS, DIM_SYS), dtype=complex)
    for m, p in enumerate(weights):
        rho += p * per_state[:, m]
    dyn = Dynamics(np.array(times), rho, engine="exact", norm_error=np.array(norm_err),
                   meta={"n_s": bath.n_s, "n_eig": ensemble.n_eig,
                         "truncation_ratio": ensemble.truncation_ratio})
    return ExactResult(dyn, per_state, weights, ensemble.energies, bath)
