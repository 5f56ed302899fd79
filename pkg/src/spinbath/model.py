"""Three-qubit subsystem driven by a Gaussian pulse train and coupled to a spin bath.

Spins 0 and 2 are impurity qubits, spin 1 is the optical phonon, spins
``3 .. n_s + 2`` are the bath.  Energies in eV, times in hbar/eV, hbar = 1.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .bath import BathEnsemble, BathSpec, build_bath_hamiltonian
from .spins import GaussianPulse, HamiltonianSpec, PauliString, bits_to_index, to_dense

N_SYS = 3
DIM_SYS = 1 << N_SYS
# pulse order within one sequence: (coupled pair, which of t1..t4)
PULSE_PAIRS = (((0, 1), 0), ((1, 2), 1), ((1, 2), 2), ((0, 1), 3))
INITIAL_SYSTEM = "100"


@dataclass
class ModelConfig:
    omega_eg: float = 3.0
    omega_p: float = 0.2
    lambda0: float = 0.0075
    lam: float = 0.03
    beta: float = 0.0001
    omega_c: float = 0.05
    kT: float = 0.0067
    a: float = 0.325
    b: float | None = None  # default 0.325 a^2
    omega_laser: float | None = None  # default omega_eg - omega_p
    t1: float = 10.0
    t2: float = 30.0
    t3: float = 50.0
    t4: float = 70.0
    tau_seq: float = 80.0
    n_seq: int = 3
    dt: float = 0.1
    t_end: float = 240.0
    sample_every: int = 10
    n_s: int = 4
    n_eig: int = 10
    seed: int = 0
    grid_n: int = 100
    c_convention: str = "variance"
    moment_ns: int = 3
    moment_method: str = "auto"
    moment_samples: int = 2000

    def __post_init__(self):
        if self.b is None:
            self.b = 0.325 * self.a ** 2
        if self.omega_laser is None:
            self.omega_laser = self.omega_eg - self.omega_p
        self.validate()

    def validate(self) -> None:
        for name in ("omega_eg", "omega_p", "omega_c", "kT", "b", "dt", "t_end", "tau_seq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda0", "lam", "beta", "a", "omega_laser"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name, lo in (("n_s", 0), ("n_eig", 1), ("sample_every", 1), ("n_seq", 0),
                         ("grid_n", 16), ("moment_ns", 1), ("moment_samples", 2)):
            v = getattr(self, name)
            if int(v) != v or v < lo:
                raise ValueError(f"{name} must be an integer >= {lo}, got {v}")
        if self.c_convention not in ("variance", "raw"):
            raise ValueError(f"c_convention must be 'variance' or 'raw', got {self.c_convention!r}")
        if self.moment_method not in ("auto", "exact", "stochastic"):
            raise ValueError(f"moment_method must be auto, exact or stochastic, got {self.moment_method!r}")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def pulse_centers(self) -> list[float]:
        t = (self.t1, self.t2, self.t3, self.t4)
        return [t[i] + k * self.tau_seq for k in range(self.n_seq) for _, i in PULSE_PAIRS]

    def bath_spec(self, n_s: int | None = None) -> BathSpec:
        """Bath with frequencies drawn from ``seed``; smaller ``n_s`` gives a prefix of the same draw."""
        n_s = self.n_s if n_s is None else n_s
        return BathSpec.sample(n_s, beta=self.beta, lam=self.lam, lambda0=self.lambda0,
                               omega_c=self.omega_c, seed=self.seed)


def pulse_train(cfg: ModelConfig) -> tuple[list[GaussianPulse], list[tuple[int, int]]]:
    """Envelopes and the system pair each one couples, in time order per sequence."""
    t = (cfg.t1, cfg.t2, cfg.t3, cfg.t4)
    pulses, pairs = [], []
    for k in range(cfg.n_seq):
        for pair, i in PULSE_PAIRS:
            pulses.append(GaussianPulse(cfg.a, cfg.b, t[i] + k * cfg.tau_seq, cfg.omega_laser))
            pairs.append(pair)
    return pulses, pairs


def _system_terms(cfg: ModelConfig) -> list[PauliString]:
    return [PauliString(cfg.omega_eg / 2, ((0, "z"),)),
            PauliString(cfg.omega_p / 2, ((1, "z"),)),
            PauliString(cfg.omega_eg / 2, ((2, "z"),))]


def _pulse_terms(cfg: ModelConfig) -> tuple[list[PauliString], list[GaussianPulse]]:
    pulses, pairs = pulse_train(cfg)
    terms = [PauliString(1.0, ((i, "x"), (j, "x")), envelope=e) for e, (i, j) in enumerate(pairs)]
    return terms, pulses


def build_system_hamiltonian(cfg: ModelConfig, mean_field: float = 0.0) -> HamiltonianSpec:
    """``H_s + E(t) + mean_field * S`` on the three system spins, ``S = sum_i sigma_x^(i)``."""
    terms = _system_terms(cfg)
    if mean_field:
        terms += [PauliString(mean_field, ((i, "x"),)) for i in range(N_SYS)]
    pterms, pulses = _pulse_terms(cfg)
    return HamiltonianSpec(N_SYS, terms + pterms, pulses)


def build_total_hamiltonian(cfg: ModelConfig, bath: BathSpec | None = None) -> HamiltonianSpec:
    """Full time-dependent Hamiltonian on ``3 + n_s`` spins."""
    bath = cfg.bath_spec() if bath is None else bath
    n = N_SYS + bath.n_s
    terms = _system_terms(cfg)
    if bath.lambda0:
        terms += [PauliString(bath.lambda0, ((i, "x"), (N_SYS + j, "x")))
                  for i in range(N_SYS) for j in range(bath.n_s)]
    terms += list(build_bath_hamiltonian(bath, offset=N_SYS, n_spins=n).terms)
    pterms, pulses = _pulse_terms(cfg)
    return HamiltonianSpec(n, terms + pterms, pulses)


def coupling_operator() -> np.ndarray:
    """``S = sigma_x^(0) + sigma_x^(1) + sigma_x^(2)`` as an 8x8 matrix."""
    return to_dense(HamiltonianSpec(N_SYS, [PauliString(1.0, ((i, "x"),)) for i in range(N_SYS)])).real


def initial_system_density() -> np.ndarray:
    rho = np.zeros((DIM_SYS, DIM_SYS), dtype=complex)
    k = bits_to_index(INITIAL_SYSTEM)
    rho[k, k] = 1.0
    return rho


def initial_states(cfg: ModelConfig, ensemble: BathEnsemble) -> np.ndarray:
    """Columns ``|100> (x) |m>`` for every retained bath eigenstate."""
    sys = np.zeros(DIM_SYS, dtype=complex)
    sys[bits_to_index(INITIAL_SYSTEM)] = 1.0
    V = ensemble.eigvecs
    # bath occupies the high bits: index = s + 8 b
    return np.einsum("bm,s->bsm", V, sys).reshape(V.shape[0] * DIM_SYS, V.shape[1])
