import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PAULI, X, Y, Z, dense_hamiltonian, embed, partial_trace_low, string
from spinbath.spins import (GaussianPulse, HamiltonianSpec, PauliString, apply_hamiltonian, apply_pauli,
                            basis_state, bits_to_index, hermiticity_error, min_eigenvalue, n_spins_of,
                            qubit_marginals, reduced_system_density, to_dense)

rng = np.random.default_rng(7)


def rand_state(n, batch=()):
    v = rng.standard_normal((1 << n,) + batch) + 1j * rng.standard_normal((1 << n,) + batch)
    return v / np.linalg.norm(v, axis=0)


def test_single_spin_actions():
    # sigma_x|0> = |1>, sigma_y|0> = i|1>, sigma_y|1> = -i|0>, sigma_z|1> = |1>
    e0, e1 = basis_state(1, 0), basis_state(1, 1)
    assert np.allclose(apply_pauli(e0, "x", 0), e1)
    assert np.allclose(apply_pauli(e0, "y", 0), 1j * e1)
    assert np.allclose(apply_pauli(e1, "y", 0), -1j * e0)
    assert np.allclose(apply_pauli(e1, "z", 0), e1)
    assert np.allclose(apply_pauli(e0, "z", 0), -e0)


def test_little_endian_bits():
    # sigma_x on site 1 of |000> gives index 2
    psi = apply_pauli(basis_state(3, 0), "x", 1)
    assert np.argmax(np.abs(psi)) == 2
    assert bits_to_index("100") == 1
    assert bits_to_index("010") == 2
    assert bits_to_index("001") == 4


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_apply_pauli_matches_dense(n, axis):
    psi = rand_state(n, (3,))
    for site in range(n):
        ref = embed({site: PAULI[axis]}, n) @ psi
        assert np.max(np.abs(apply_pauli(psi, axis, site) - ref)) < 1e-12


def test_pauli_squares_to_identity_and_anticommute():
    psi = rand_state(3)
    for a in "xyz":
        assert np.allclose(apply_pauli(apply_pauli(psi, a, 1), a, 1), psi, atol=1e-14)
    xy = apply_pauli(apply_pauli(psi, "y", 0), "x", 0)
    yx = apply_pauli(apply_pauli(psi, "x", 0), "y", 0)
    assert np.allclose(xy, -yx, atol=1e-14)


def test_apply_pauli_errors():
    with pytest.raises(ValueError):
        apply_pauli(np.ones(3), "x", 0)
    with pytest.raises(ValueError):
        apply_pauli(np.ones(4), "x", 2)
    with pytest.raises(ValueError):
        apply_pauli(np.ones(4), "w", 0)


def test_n_spins_of():
    assert n_spins_of(1) == 0
    assert n_spins_of(64) == 6
    with pytest.raises(ValueError):
        n_spins_of(12)


def test_pauli_string_validation():
    with pytest.raises(ValueError):
        PauliString(1.0, ((0, "x"), (0, "z")))
    with pytest.raises(ValueError):
        PauliString(1.0, ((0, "q"),))
    with pytest.raises(ValueError):
        HamiltonianSpec(2, [PauliString(1.0, ((2, "x"),))])
    with pytest.raises(ValueError):
        HamiltonianSpec(2, [PauliString(1.0, ((0, "x"),), envelope=0)])
    with pytest.raises(ValueError):
        GaussianPulse(1.0, 0.0, 0.0, 1.0)


pauli_term = st.tuples(
    st.floats(-2, 2, allow_nan=False),
    st.lists(st.tuples(st.integers(0, 3), st.sampled_from("xyz")), min_size=1, max_size=4,
             unique_by=lambda f: f[0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(pauli_term, min_size=1, max_size=6), st.floats(0, 20))
def test_hamiltonian_matches_kronecker_oracle(terms, t):
    pulses = [GaussianPulse(0.7, 0.3, 5.0, 2.0)]
    strings = [PauliString(c, tuple(f), envelope=(0 if i % 2 else None)) for i, (c, f) in enumerate(terms)]
    spec = HamiltonianSpec(4, strings, pulses)
    psi = rand_state(4, (2,))
    ref = dense_hamiltonian(spec, t) @ psi
    assert np.max(np.abs(apply_hamiltonian(spec, t, psi) - ref)) < 1e-12
    assert np.max(np.abs(to_dense(spec, t) - dense_hamiltonian(spec, t))) < 1e-12


def test_y_only_string_is_complex_hermitian():
    spec = HamiltonianSpec(2, [PauliString(0.7, ((0, "y"), (1, "z")))])
    H = to_dense(spec)
    assert hermiticity_error(H) < 1e-15
    assert np.allclose(H, 0.7 * np.kron(Z, Y))


def test_apply_hamiltonian_out_buffer_and_dim_check():
    spec = HamiltonianSpec(2, [PauliString(1.0, ((0, "x"),)), PauliString(0.5, ((1, "z"),))])
    psi = rand_state(2)
    out = np.empty_like(psi)
    res = apply_hamiltonian(spec, 0.0, psi, out=out)
    assert res is out
    assert np.allclose(out, dense_hamiltonian(spec) @ psi)
    with pytest.raises(ValueError):
        apply_hamiltonian(spec, 0.0, np.ones(8))


def test_empty_hamiltonian_is_zero():
    spec = HamiltonianSpec(2, [])
    assert np.all(apply_hamiltonian(spec, 0.0, rand_state(2)) == 0)


def test_reduced_density_matches_dense_partial_trace():
    psi = rand_state(5)
    rho = np.outer(psi, psi.conj())
    r = reduced_system_density(psi, 3)
    assert np.max(np.abs(r - partial_trace_low(rho, 3))) < 1e-14
    assert abs(np.trace(r) - 1) < 1e-14
    # explicit site list in a different position: keep sites 1 and 3
    r13 = reduced_system_density(psi, [1, 3])
    t = rho.reshape((2,) * 10)
    # axes: spin 4..0 rows, then spin 4..0 cols; keep spins 3 (axis 1) and 1 (axis 3)
    full = np.einsum("abcdeafche->bdfh", t).reshape(4, 4)
    assert np.max(np.abs(r13 - full)) < 1e-14


def test_reduced_density_batched_columns():
    psi = rand_state(4, (3,))
    stack = reduced_system_density(psi, 2)
    assert stack.shape == (3, 4, 4)
    for m in range(3):
        assert np.allclose(stack[m], reduced_system_density(psi[:, m], 2), atol=1e-15)


def test_qubit_marginals_match_partial_traces():
    psi = rand_state(3, (2,))
    rho = np.einsum("im,jm->ij", psi, psi.conj()) / 2
    marg = qubit_marginals(rho)
    assert marg.shape == (3, 2, 2)
    for site in range(3):
        ref = np.zeros((2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                P = embed({site: np.outer(np.eye(2)[b], np.eye(2)[a])}, 3)
                ref[a, b] = np.trace(rho @ P)
        assert np.max(np.abs(marg[site] - ref)) < 1e-14
    stack = qubit_marginals(np.stack([rho, rho]))
    assert stack.shape == (2, 3, 2, 2)


def test_qubit_marginal_of_basis_state():
    k = bits_to_index("100")
    rho = np.outer(basis_state(3, k), basis_state(3, k))
    m = qubit_marginals(rho)
    assert m[0, 1, 1] == 1 and m[1, 0, 0] == 1 and m[2, 0, 0] == 1


def test_diagnostics():
    rho = np.diag([0.5, 0.5, -1e-3, 0]).astype(complex)
    assert min_eigenvalue(rho) == pytest.approx(-1e-3)
    bad = rho.copy()
    bad[0, 1] = 1e-4
    assert hermiticity_error(bad) == pytest.approx(1e-4)
    assert min_eigenvalue(np.stack([rho, np.eye(4) / 4])).shape == (2,)


def test_gaussian_pulse():
    p = GaussianPulse(0.325, 0.034, 10.0, 2.8)
    assert p(10.0) == pytest.approx(0.325 * np.cos(28.0))
    assert abs(p(200.0)) < 1e-300
    assert np.allclose(string(((0, "x"), (1, "x")), 2), np.kron(X, X))
