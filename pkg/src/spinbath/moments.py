"""Liouville-space averages <AA+> and <AA> of the projected Liouvillian A = QLQ.

Operators on the total space are dense ``(D, D)`` arrays in the little-endian
basis, system spins in the low bits.  ``P X = Tr_b(X) (x) B`` with ``B`` the
(truncated) canonical bath density; ``Q = 1 - P``.  The average of a
superoperator ``F`` is ``Tr(F) / D**2`` over the Hilbert-Schmidt space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathEnsemble
from .spins import HamiltonianSpec, to_dense


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class Moments:
    aa_dag: float
    aa: float
    aa_dag_err: float = 0.0
    aa_err: float = 0.0
    method: str = "exact"
    samples: int = 0


class ProjectedLiouvillian:
    """Action of ``A = QLQ`` and its Hilbert-Schmidt adjoint on stacks of matrices."""

    def __init__(self, H: np.ndarray, B: np.ndarray, dim_sys: int):
        self.H = np.asarray(H, dtype=complex)
        self.B = np.asarray(B, dtype=complex)
        self.ds = dim_sys
        self.db = self.B.shape[0]
        self.D = self.ds * self.db
        if self.H.shape != (self.D, self.D):
            raise ValueError(f"H has shape {self.H.shape}, expected {(self.D, self.D)}")
        self._BI = np.kron(self.B, np.eye(self.ds))  # I_s (x) B in index order

    def _ptrace(self, X):
        lead = X.shape[:-2]
        t = X.reshape(lead + (self.db, self.ds, self.db, self.ds))
        return np.einsum("...bsbt->...st", t)

    def _with_bath(self, R, bath):
        lead = R.shape[:-2]
        return np.einsum("bc,...st->...bsct", bath, R).reshape(lead + (self.D, self.D))

    def L(self, X):
        return self.H @ X - X @ self.H

    def P(self, X):
        return self._with_bath(self._ptrace(X), self.B)

    def P_dag(self, Y):
        return self._with_bath(self._ptrace(Y @ self._BI), np.eye(self.db))

    def Q(self, X):
        return X - self.P(X)

    def Q_dag(self, Y):
        return Y - self.P_dag(Y)

    def A(self, X):
        return self.Q(self.L(self.Q(X)))

    def A_dag(self, Y):
        return self.Q_dag(self.L(self.Q_dag(Y)))


def _hs(X, Y):
    """Batched Hilbert-Schmidt inner product (X|Y) = Tr(X^dagger Y)."""
    return np.einsum("...ij,...ij->...", X.conj(), Y)


def _per_probe(op: ProjectedLiouvillian, Z):
    AZ = op.A(Z)
    AdZ = op.A_dag(Z)
    return np.einsum("...ij,...ij->...", AdZ.conj(), AdZ).real, _hs(AdZ, AZ)


def liouvillian_operator(total: HamiltonianSpec, ensemble: BathEnsemble, n_sys: int) -> ProjectedLiouvillian:
    """``QLQ`` for the time-independent part of ``total``."""
    H = to_dense(total.static_part())
    return ProjectedLiouvillian(H, ensemble.density(), 1 << n_sys)


def kernel_moments(total: HamiltonianSpec, ensemble: BathEnsemble, n_sys: int, *,
                   method: str = "exact", samples: int = 2000, seed: int = 0,
                   rel_tol: float | None = None, batch: int = 64) -> Moments:
    """Estimate ``<AA+>`` and ``<AA>`` for the projected Liouvillian.

    ``method='exact'`` sums over every matrix unit ``|i><j|`` (cost grows as
    D**5, practical for D <= 64).  ``method='stochastic'`` averages over
    ``samples`` Rademacher probe matrices, each drawn from its own child seed
    so the result does not depend on batching; standard errors are reported
    and, if ``rel_tol`` is given, enforced.
    """
    op = liouvillian_operator(total, ensemble, n_sys)
    return moments_of(op, method=method, samples=samples, seed=seed, rel_tol=rel_tol, batch=batch)


def moments_of(op: ProjectedLiouvillian, *, method: str = "exact", samples: int = 2000,
               seed: int = 0, rel_tol: float | None = None, batch: int = 64) -> Moments:
    D = op.D
    if method == "exact":
        s_dag = 0.0
        s_aa = 0.0
        for i in range(D):
            # all units |i><j| for this row at once
            E = np.zeros((D, D, D), dtype=complex)
            E[np.arange(D), i, np.arange(D)] = 1.0
            a, b = _per_probe(op, E)
            s_dag += a.sum()
            s_aa += b.sum()
        return Moments(float(s_dag) / D**2, float(np.real(s_aa)) / D**2, method="exact")
    if method != "stochastic":
        raise ValueError(f"unknown moment method {method!r}")
    if samples < 2:
        raise ValueError("stochastic estimator needs at least 2 samples")
    children = np.random.SeedSequence(seed).spawn(samples)
    xs = np.empty(samples)
    ys = np.empty(samples)
    for start in range(0, samples, batch):
        idx = range(start, min(samples, start + batch))
        Z = np.stack([np.random.default_rng(children[r]).choice((-1.0, 1.0), size=(D, D))
                      for r in idx]).astype(complex)
        a, b = _per_probe(op, Z)
        xs[start:start + len(idx)] = a / D**2
        ys[start:start + len(idx)] = np.real(b) / D**2
    m = Moments(float(xs.mean()), float(ys.mean()),
                float(xs.std(ddof=1) / np.sqrt(samples)),
                float(ys.std(ddof=1) / np.sqrt(samples)), "stochastic", samples)
    if rel_tol is not None:
        worst = max(m.aa_dag_err / abs(m.aa_dag), m.aa_err / max(abs(m.aa), 1e-300))
        if worst > rel_tol:
            raise EstimatorError(f"relative standard error {worst:.2e} exceeds {rel_tol:.1e} "
                                 f"with R={samples} probes; increase the sample count")
    return m
