"""Self-interacting spin bath: spectrum, thermal ensemble and mean-field statistics."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .spins import HamiltonianSpec, PauliString, apply_hamiltonian, apply_pauli

log = logging.getLogger(__name__)


class LanczosError(RuntimeError):
    pass


@dataclass(frozen=True)
class BathSpec:
    frequencies: np.ndarray
    beta: float
    lam: float
    lambda0: float
    omega_c: float
    seed: int | None = None

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        object.__setattr__(self, "frequencies", w)
        if np.any(w <= 0) or np.any(w > self.omega_c):
            raise ValueError("bath frequencies must lie in (0, omega_c]")

    @property
    def n_s(self) -> int:
        return len(self.frequencies)

    @classmethod
    def sample(cls, n_s: int, *, beta: float, lam: float, lambda0: float, omega_c: float,
               seed: int) -> "BathSpec":
        w = sample_debye_frequencies(n_s, omega_c, seed) if n_s else np.zeros(0)
        return cls(w, beta, lam, lambda0, omega_c, seed)

    def truncated(self, n_s: int) -> "BathSpec":
        """Same bath restricted to its first ``n_s`` spins."""
        return BathSpec(self.frequencies[:n_s], self.beta, self.lam, self.lambda0,
                        self.omega_c, self.seed)


def debye_inverse_cdf(u, omega_c: float):
    """Inverse CDF of ``g(w) ~ w**2`` on ``(0, omega_c]``."""
    return omega_c * np.cbrt(u)


def sample_debye_frequencies(n_s: int, omega_c: float, seed) -> np.ndarray:
    """``n_s`` draws from the 3-D Debye density with hard cutoff ``omega_c``.

    A fixed seed gives a nested sequence: the first ``k`` draws do not depend
    on ``n_s``.
    """
    if n_s < 1:
        raise ValueError(f"n_s must be >= 1, got {n_s}")
    if not omega_c > 0:
        raise ValueError(f"omega_c must be positive, got {omega_c}")
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n_s)  # (0, 1]
    return debye_inverse_cdf(u, omega_c)


def build_bath_hamiltonian(spec: BathSpec, offset: int = 0, n_spins: int | None = None) -> HamiltonianSpec:
    """Bath Hamiltonian, with bath spin ``j`` placed on site ``offset + j``."""
    n = spec.n_s
    terms = []
    for j, w in enumerate(spec.frequencies):
        terms.append(PauliString(0.5 * w, ((offset + j, "z"),)))
        if spec.beta:
            terms.append(PauliString(spec.beta, ((offset + j, "x"),)))
    if spec.lam:
        for i in range(n):
            for j in range(i + 1, n):
                terms.append(PauliString(spec.lam, ((offset + i, "x"), (offset + j, "x"))))
    return HamiltonianSpec(offset + n if n_spins is None else n_spins, terms)


def _orthogonalize(w, blocks):
    # classical Gram-Schmidt applied twice
    for _ in range(2):
        for V in blocks:
            if V.shape[1]:
                w -= V @ (V.conj().T @ w)
    return w


def _lanczos_pass(matvec, dim, n_want, locked, rng, tol, max_krylov):
    """One Lanczos run in the orthogonal complement of ``locked``.

    Returns Ritz values, Ritz vectors and explicit residual norms for the
    ``n_want`` lowest pairs.
    """
    room = dim - locked.shape[1]
    m_max = min(room, max_krylov)
    V = np.zeros((dim, m_max), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)

    def fresh(k):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v = _orthogonalize(v, [locked, V[:, :k]])
        return v / np.linalg.norm(v)

    v = fresh(0)
    m = 0
    theta = s = None
    for k in range(m_max):
        V[:, k] = v
        w = matvec(v)
        alpha[k] = np.vdot(v, w).real
        w = _orthogonalize(w, [locked, V[:, : k + 1]])
        b = np.linalg.norm(w)
        m = k + 1
        if m >= n_want and (m % 5 == 0 or m == m_max or b < 1e-12):
            theta, s = eigh_tridiagonal(alpha[:m], beta[: m - 1])
            est = np.abs(b * s[-1, :n_want])
            if np.all(est < 0.1 * tol):
                break
        if m == m_max:
            break
        if b < 1e-12:
            # invariant subspace: continue in a fresh direction
            beta[k] = 0.0
            v = fresh(m)
        else:
            beta[k] = b
            v = w / b
    if theta is None or len(theta) != m:
        theta, s = eigh_tridiagonal(alpha[:m], beta[: m - 1])
    n_out = min(n_want, m)
    X = V[:, :m] @ s[:, :n_out]
    X = _orthogonalize(X, [locked])
    X, _ = np.linalg.qr(X)
    # Rayleigh-Ritz on the retained block so vectors are exactly orthonormal
    HX = matvec(X)
    h = X.conj().T @ HX
    vals, U = np.linalg.eigh(0.5 * (h + h.conj().T))
    X = X @ U
    HX = HX @ U
    res = np.linalg.norm(HX - X * vals, axis=0)
    return vals, X, res


def lowest_eigenpairs(ham: HamiltonianSpec, n_eig: int, *, tol: float = 1e-8,
                      max_krylov: int = 400, max_passes: int = 50, seed: int = 0):
    """Lowest ``n_eig`` eigenpairs of a static Hamiltonian.

    Lanczos with full reorthogonalisation, using the bitwise Hamiltonian
    action as the matrix-vector product.  After the first pass, further
    passes restricted to the orthogonal complement of the accepted vectors
    recover degenerate partners a single Krylov sequence cannot see.

    Returns ``(energies, vectors)`` with vectors as columns.
    """
    if not ham.is_static:
        raise ValueError("lowest_eigenpairs needs a time-independent Hamiltonian")
    dim = ham.dim
    if not 1 <= n_eig <= dim:
        raise ValueError(f"n_eig = {n_eig} must be in [1, {dim}]")
    rng = np.random.default_rng(seed)

    def matvec(v):
        return apply_hamiltonian(ham, 0.0, v.astype(complex, copy=False))

    def converged_pass(n_want, locked):
        krylov = max_krylov
        while True:
            theta, X, res = _lanczos_pass(matvec, dim, n_want, locked, rng, tol, krylov)
            if np.all(res <= tol):
                return theta, X
            if krylov >= dim - locked.shape[1]:
                raise LanczosError(f"Lanczos did not converge: worst residual "
                                   f"{np.max(res):.3e} > {tol:.1e}")
            krylov = min(dim, 2 * krylov)

    vals, vecs = converged_pass(n_eig, np.zeros((dim, 0), dtype=complex))
    for _ in range(max_passes):
        if vecs.shape[1] == dim:
            break
        theta, X = converged_pass(1, vecs)
        if theta[0] >= vals[-1] - tol:
            break
        # a level below the current n_eig-th was missed: merge and re-diagonalise
        Q, _ = np.linalg.qr(np.hstack([vecs, X]))
        h = Q.conj().T @ matvec(Q)
        vals, U = np.linalg.eigh(0.5 * (h + h.conj().T))
        vals, vecs = vals[:n_eig], (Q @ U)[:, :n_eig]
    else:
        raise LanczosError("Lanczos deflation passes exhausted")
    res = np.linalg.norm(matvec(vecs) - vecs * vals, axis=0)
    if np.max(res) > tol:
        raise LanczosError(f"Lanczos did not converge: worst residual {np.max(res):.3e} > {tol:.1e}")
    return vals, vecs


def thermal_weights(energies, kT: float) -> np.ndarray:
    """Normalised Boltzmann weights over the retained levels."""
    if not kT > 0:
        raise ValueError(f"kT must be positive, got {kT}")
    e = np.asarray(energies, dtype=float)
    w = np.exp(-(e - e.min()) / kT)
    return w / w.sum()


@dataclass(frozen=True)
class BathEnsemble:
    energies: np.ndarray
    eigvecs: np.ndarray  # (2**n_s, n_eig), columns |m>
    weights: np.ndarray
    kT: float

    @property
    def n_eig(self) -> int:
        return len(self.energies)

    @property
    def truncation_ratio(self) -> float:
        """p_{n_eig} / p_1; small when the truncated canonical density is faithful."""
        return float(self.weights[-1] / self.weights[0])

    def density(self) -> np.ndarray:
        """Truncated canonical bath density ``sum_m p_m |m><m|``."""
        V = self.eigvecs
        return (V * self.weights) @ V.conj().T


def thermal_ensemble(spec: BathSpec, n_eig: int, kT: float, *, warn_ratio: float = 1e-6) -> BathEnsemble:
    """Diagonalise the bath and attach Boltzmann weights.

    ``n_eig`` is clipped to the bath dimension.  A warning is logged when the
    highest retained level is still populated above ``warn_ratio``.
    """
    if spec.n_s == 0:
        return BathEnsemble(np.zeros(1), np.ones((1, 1), dtype=complex), np.ones(1), kT)
    ham = build_bath_hamiltonian(spec)
    n_eig = min(n_eig, ham.dim)
    energies, vecs = lowest_eigenpairs(ham, n_eig, seed=0 if spec.seed is None else spec.seed)
    ens = BathEnsemble(energies, vecs, thermal_weights(energies, kT), kT)
    if n_eig < ham.dim and ens.truncation_ratio >= warn_ratio:
        log.warning("bath truncation: p_%d/p_1 = %.3g >= %.1g; consider larger n_eig",
                    n_eig, ens.truncation_ratio, warn_ratio)
    return ens


@dataclass(frozen=True)
class BathStatistics:
    sigma_x_mean: float
    c: float
    sigma_x2_mean: float
    convention: str = "variance"


def _sigma_x_total(vecs: np.ndarray) -> np.ndarray:
    n = vecs.shape[0].bit_length() - 1
    out = np.zeros_like(vecs, dtype=complex)
    buf = np.empty_like(out)
    for j in range(n):
        out += apply_pauli(vecs, "x", j, out=buf)
    return out


def bath_statistics(ensemble: BathEnsemble, spec: BathSpec, convention: str = "variance") -> BathStatistics:
    """Thermal mean of Sigma_x and the coupling-strength factor C.

    ``convention='variance'`` gives ``C = lambda0^2 (<Sigma_x^2> - <Sigma_x>^2)``;
    ``'raw'`` gives ``C = lambda0^2 <Sigma_x^2>``.
    """
    if convention not in ("variance", "raw"):
        raise ValueError(f"unknown C convention {convention!r}")
    if spec.n_s == 0:
        return BathStatistics(0.0, 0.0, 0.0, convention)
    V = ensemble.eigvecs
    SV = _sigma_x_total(V)
    p = ensemble.weights
    mean = float(np.sum(p * np.einsum("im,im->m", V.conj(), SV).real))
    mean2 = float(np.sum(p * np.einsum("im,im->m", SV.conj(), SV).real))
    var = mean2 - mean ** 2 if convention == "variance" else mean2
    return BathStatistics(mean, spec.lambda0 ** 2 * max(var, 0.0), mean2, convention)


def write_index_csv(path, values, header=("index", "value")) -> None:
    """Two-column CSV export used for frequencies and eigenvalues."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, v in enumerate(np.asarray(values).ravel()):
            w.writerow([i, repr(float(np.real(v)))])
