"""Bit-indexed many-spin primitives.

Basis index ``j = sum_i j_i 2**i``: spin ``i`` lives in bit ``i``.  Bit value 1
is the excited state (sigma_z eigenvalue +1), bit value 0 the ground state.
States are plain numpy arrays whose first axis has length ``2**n``; any
trailing axes are treated as a batch of independent states.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

AXES = ("x", "y", "z")


def n_spins_of(length: int) -> int:
    """Number of spins for a state-vector length; raises if not a power of two."""
    n = int(length).bit_length() - 1
    if length < 1 or 1 << n != length:
        raise ValueError(f"length {length} is not a power of two")
    return n


@dataclass(frozen=True)
class GaussianPulse:
    """Real envelope ``a * exp(-b (t - t_c)**2) * cos(carrier * t)``."""

    amplitude: float
    width: float
    center: float
    carrier: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width parameter must be > 0, got {self.width}")

    def __call__(self, t):
        return (self.amplitude * np.exp(-self.width * (t - self.center) ** 2)
                * np.cos(self.carrier * t))


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    factors: tuple[tuple[int, str], ...]
    envelope: int | None = None

    def __post_init__(self):
        factors = tuple((int(s), str(a)) for s, a in self.factors)
        object.__setattr__(self, "factors", factors)
        sites = [s for s, _ in factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in Pauli string {factors}")
        for s, a in factors:
            if a not in AXES:
                raise ValueError(f"unknown Pauli axis {a!r}")
            if s < 0:
                raise ValueError(f"negative site index {s}")

    @property
    def flip_mask(self) -> int:
        mask = 0
        for s, a in self.factors:
            if a != "z":
                mask |= 1 << s
        return mask

    def phases(self, n_spins: int) -> np.ndarray:
        """``phase[j]`` such that ``P|j> = phase[j] |j ^ flip_mask>``."""
        j = np.arange(1 << n_spins)
        out = np.ones(1 << n_spins, dtype=complex)
        for s, a in self.factors:
            bit = (j >> s) & 1
            if a == "z":
                out *= np.where(bit == 1, 1.0, -1.0)
            elif a == "y":
                out *= np.where(bit == 0, 1j, -1j)
        return out


@dataclass(frozen=True)
class HamiltonianSpec:
    """Weighted Pauli strings, each optionally multiplied by a pulse envelope.

    Treated as immutable: the compiled form is cached on first use.
    """

    n_spins: int
    terms: tuple[PauliString, ...]
    envelopes: tuple[GaussianPulse, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "envelopes", tuple(self.envelopes))
        for term in self.terms:
            for s, _ in term.factors:
                if s >= self.n_spins:
                    raise ValueError(f"site {s} out of range for {self.n_spins} spins")
            if term.envelope is not None and not 0 <= term.envelope < len(self.envelopes):
                raise ValueError(f"term references missing envelope {term.envelope}")

    @property
    def dim(self) -> int:
        return 1 << self.n_spins

    @property
    def is_static(self) -> bool:
        return all(t.envelope is None for t in self.terms)

    def static_part(self) -> "HamiltonianSpec":
        return HamiltonianSpec(self.n_spins, [t for t in self.terms if t.envelope is None])

    @cached_property
    def compiled(self) -> "_CompiledHamiltonian":
        return _CompiledHamiltonian(self)


class _CompiledHamiltonian:
    """Terms grouped by bit-flip mask.

    Each group stores one diagonal array ``d`` (reshaped to the spin tensor
    shape) so that ``(H psi)[k] = sum_mask d_mask[k] * psi[k ^ mask]``.  The
    permutation ``k -> k ^ mask`` is a ``np.flip`` over the flipped spin axes
    of the ``(2,)*n`` view.  The static groups are also assembled once into a
    sparse matrix with the same entries, which is what ``apply`` uses.
    """

    def __init__(self, spec: HamiltonianSpec):
        n = spec.n_spins
        self.n = n
        self.dim = 1 << n
        self.envelopes = spec.envelopes
        k = np.arange(self.dim)
        static: dict[int, np.ndarray] = {}
        dynamic: dict[tuple[int, bytes], list] = {}
        for term in spec.terms:
            mask = term.flip_mask
            # d[k] multiplies psi[k ^ mask]
            d = term.phases(n)[k ^ mask]
            if term.envelope is None:
                static[mask] = static.get(mask, 0) + term.coefficient * d
            else:
                entry = dynamic.setdefault((mask, d.tobytes()), [mask, d, []])
                entry[2].append((term.envelope, term.coefficient))
        self.static = [(m, self._shape(d), self._axes(m)) for m, d in sorted(static.items())]
        self.dynamic = [(m, self._shape(d), self._axes(m), tuple(env))
                        for m, d, env in dynamic.values()]
        self.is_real = not any(np.any(d.imag) for _, d, *_ in self.static + self.dynamic)
        if self.is_real:
            self.static = [(m, d.real.copy(), ax) for m, d, ax in self.static]
            self.dynamic = [(m, d.real.copy(), ax, env) for m, d, ax, env in self.dynamic]
        if self.static:
            rows = np.concatenate([k] * len(self.static))
            cols = np.concatenate([k ^ m for m, _, _ in self.static])
            vals = np.concatenate([d.ravel() for _, d, _ in self.static])
            self.static_matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))
        else:
            self.static_matrix = None

    def _shape(self, d):
        return np.ascontiguousarray(d).reshape((2,) * self.n)

    def _axes(self, mask):
        # axis a of the (2,)*n view holds spin n-1-a
        return tuple(self.n - 1 - s for s in range(self.n) if mask >> s & 1)

    def apply(self, t, psi, out=None):
        batch = psi.shape[1:]
        view = psi.reshape((2,) * self.n + batch)
        pad = (None,) * len(batch)
        dtype = np.result_type(psi, float if self.is_real else complex)
        if out is None:
            out = np.zeros(psi.shape, dtype=dtype)
        if self.static_matrix is not None:
            flat = psi.reshape(self.dim, -1)
            out.reshape(self.dim, -1)[...] = self.static_matrix @ flat
        else:
            out[...] = 0
        acc = out.reshape((2,) * self.n + batch)
        for mask, d, axes, env in self.dynamic:
            s = sum(c * self.envelopes[e](t) for e, c in env)
            if s == 0.0:
                continue
            src = np.flip(view, axes) if axes else view
            acc += (s * d)[(...,) + pad] * src
        return out


def apply_pauli(state: np.ndarray, axis: str, site: int, out: np.ndarray | None = None) -> np.ndarray:
    """Return ``sigma_axis^(site) |state>``.

    ``out`` may be passed as a reusable scratch buffer with the shape of
    ``state``; it must not alias ``state``.
    """
    n = n_spins_of(state.shape[0])
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} spins")
    if axis not in AXES:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    if out is None:
        out = np.empty(state.shape, dtype=np.result_type(state, complex) if axis == "y" else state.dtype)
    hi = 1 << (n - site - 1)
    lo = 1 << site
    src = state.reshape((hi, 2, lo) + state.shape[1:])
    dst = out.reshape(src.shape)
    if axis == "x":
        dst[:, 0] = src[:, 1]
        dst[:, 1] = src[:, 0]
    elif axis == "y":
        dst[:, 1] = 1j * src[:, 0]
        dst[:, 0] = -1j * src[:, 1]
    else:
        dst[:, 0] = -src[:, 0]
        dst[:, 1] = src[:, 1]
    return out


def apply_hamiltonian(spec: HamiltonianSpec, t: float, state: np.ndarray,
                      out: np.ndarray | None = None) -> np.ndarray:
    """Return ``H(t) |state>`` for every column of ``state``."""
    if state.shape[0] != spec.dim:
        raise ValueError(f"state length {state.shape[0]} does not match {spec.n_spins} spins")
    return spec.compiled.apply(t, state, out)


def to_dense(spec: HamiltonianSpec, t: float = 0.0) -> np.ndarray:
    """Dense ``H(t)`` built column by column from the bitwise action."""
    eye = np.eye(spec.dim, dtype=complex)
    return apply_hamiltonian(spec, t, eye)


def reduced_system_density(state: np.ndarray, system_sites: Sequence[int] | int) -> np.ndarray:
    """Partial trace of ``|psi><psi|`` over every spin not in ``system_sites``.

    ``system_sites`` may be an int ``k`` meaning the low ``k`` bits.  Kept
    sites retain their relative bit order in the result.  A 2-D ``state`` is
    read as columns of independent states and yields a stack of densities.
    """
    n = n_spins_of(state.shape[0])
    if isinstance(system_sites, (int, np.integer)):
        sites = list(range(int(system_sites)))
    else:
        sites = sorted(set(int(s) for s in system_sites))
    if any(not 0 <= s < n for s in sites):
        raise ValueError(f"system sites {sites} out of range for {n} spins")
    k = len(sites)
    batch = state.shape[1:]
    if sites == list(range(k)):
        m = state.reshape((1 << (n - k), 1 << k) + batch)
    else:
        tensor = state.reshape((2,) * n + batch)
        keep = [n - 1 - s for s in reversed(sites)]
        rest = [a for a in range(n) if a not in keep]
        extra = list(range(n, n + len(batch)))
        m = tensor.transpose(rest + keep + extra).reshape((1 << (n - k), 1 << k) + batch)
    if batch:
        return np.einsum("bs...,bt...->...st", m, m.conj())
    return m.T @ m.conj()


def qubit_marginals(rho: np.ndarray) -> np.ndarray:
    """Single-qubit marginals of a little-endian multi-qubit density.

    Returns shape ``(..., n_qubits, 2, 2)``; entry ``i`` is the density of
    qubit ``i`` with all others traced out.
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {rho.shape}")
    n = n_spins_of(rho.shape[-1])
    if n < 1:
        raise ValueError("density has no qubits")
    lead = rho.shape[:-2]
    t = rho.reshape(lead + (2,) * (2 * n))
    out = np.empty(lead + (n, 2, 2), dtype=np.result_type(rho, complex))
    letters = "abcdefghijklmnopqrstuvwxyz"[: n]
    for site in range(n):
        ax = n - 1 - site
        row = list(letters)
        col = list(letters)
        row[ax] = "Y"
        col[ax] = "Z"
        sub = "..." + "".join(row) + "".join(col) + "->...YZ"
        out[..., site, :, :] = np.einsum(sub, t)
    return out


def hermiticity_error(rho: np.ndarray) -> float:
    """Elementwise max ``|rho - rho^dagger|``."""
    return float(np.max(np.abs(rho - np.swapaxes(rho, -1, -2).conj()), initial=0.0))


def min_eigenvalue(rho: np.ndarray):
    """Smallest eigenvalue of the hermitian part (vectorised over leading axes)."""
    h = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
    return np.linalg.eigvalsh(h)[..., 0]


def basis_state(n_spins: int, index: int) -> np.ndarray:
    psi = np.zeros(1 << n_spins, dtype=complex)
    psi[index] = 1.0
    return psi


def bits_to_index(bits: str) -> int:
    """``'100'`` (spin 0 first) -> 1.  Matches the ``|j_0 j_1 j_2>`` ket notation."""
    return sum(int(b) << i for i, b in enumerate(bits))
