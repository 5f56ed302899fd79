"""Sampled reduced-density trajectories and their runtime certifications."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spins import min_eigenvalue, qubit_marginals

# tolerances of the runtime certificates
TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
NORM_TOL = 1e-8


@dataclass
class Dynamics:
    """System density ``rho(t)`` on a sample grid, shape ``(n_t, 8, 8)``."""

    times: np.ndarray
    rho: np.ndarray
    engine: str = ""
    norm_error: np.ndarray | None = None  # exact engine: max_m | ||psi_m|| - 1 |
    meta: dict = field(default_factory=dict)

    @property
    def marginals(self) -> np.ndarray:
        """``(n_t, 3, 2, 2)`` single-qubit densities."""
        return qubit_marginals(self.rho)

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.rho, axis1=-2, axis2=-1).real

    @property
    def min_eig(self) -> np.ndarray:
        return min_eigenvalue(self.rho)

    @property
    def hermiticity_error(self) -> np.ndarray:
        return np.max(np.abs(self.rho - np.swapaxes(self.rho, -1, -2).conj()), axis=(-1, -2))

    def observables(self) -> np.ndarray:
        """``(n_t, 3, 4)``: rho00, rho11, Re rho01, Im rho01 for each qubit."""
        m = self.marginals
        return np.stack([m[..., 0, 0].real, m[..., 1, 1].real,
                         m[..., 0, 1].real, m[..., 0, 1].imag], axis=-1)

    def certify(self) -> dict[str, bool]:
        checks = {
            "trace": bool(np.max(np.abs(self.trace - 1.0)) <= TRACE_TOL),
            "hermiticity": bool(np.max(self.hermiticity_error) <= HERMITIAN_TOL),
            "positivity": bool(np.min(self.min_eig) >= -POSITIVITY_TOL),
        }
        if self.norm_error is not None:
            checks["norm"] = bool(np.max(self.norm_error) <= NORM_TOL)
        return checks
