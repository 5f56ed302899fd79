"""Mean-field memory function and its derived constants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class ModelError(ValueError):
    """Kernel parameters are undefined for the supplied moments."""


@dataclass(frozen=True)
class KernelParams:
    p: float
    q: float

    def __post_init__(self):
        if not self.p >= 0:
            raise ModelError(f"p must be >= 0, got {self.p}")
        if not self.q > 0:
            raise ModelError(f"q must be > 0, got {self.q}")


def kernel_params(aa_dag: float, aa: float) -> KernelParams:
    """Build ``p`` and ``q`` from the Liouville-space moments <AA+> and <AA>."""
    if not aa_dag > 0:
        raise ModelError(f"<AA+> must be positive, got {aa_dag}")
    if aa_dag < abs(aa):
        raise ModelError(f"<AA+> = {aa_dag} < |<AA>| = {abs(aa)}; kernel undefined")
    root = math.sqrt(aa_dag)
    return KernelParams(p=(aa_dag - aa) / root, q=(aa_dag + aa) / root)


def evaluate_W(params: KernelParams, t):
    """Memory function W(t), extended evenly to negative ``t``."""
    x = params.p * np.abs(t)
    poly = 1.0 + x * (-4.0 / (3.0 * math.pi) + x * (1.0 / 8.0 + x * (-4.0 / (45.0 * math.pi) + x / 48.0)))
    return poly * np.exp(-((params.q * np.asarray(t)) ** 2) / 8.0)


def kernel_cutoff(params: KernelParams, eps: float = 1e-14) -> float:
    """Time ``T`` with ``exp(-(qT)^2/8) = eps``."""
    return math.sqrt(-8.0 * math.log(eps)) / params.q


def kernel_time_constant(params: KernelParams) -> float:
    """tau = integral of W over [0, inf), by adaptive quadrature."""
    T = kernel_cutoff(params)
    val, _ = integrate.quad(lambda t: float(evaluate_W(params, t)), 0.0, T,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def kernel_is_positive(params: KernelParams, n: int = 20001, span: float = 50.0) -> bool:
    """Dense scan of W on [0, span/q]."""
    t = np.linspace(0.0, span / params.q, n)
    return bool(np.all(evaluate_W(params, t) > 0.0))
