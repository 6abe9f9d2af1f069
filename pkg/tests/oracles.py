"""Dense-matrix reference implementations used only by the tests.

Nothing here imports the simulators: matrices are assembled with np.kron,
qubit 0 being the leftmost (most significant) tensor factor.
"""

import itertools
from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
ONE_QUBIT = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.diag([1, 1j]),
    "Sdg": np.diag([1, -1j]),
    "X": PAULI["X"],
    "Z": PAULI["Z"],
}


def ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def kron_all(mats):
    return reduce(np.kron, mats)


def pauli_matrix(word):
    return kron_all([PAULI[ch] for ch in word])


def embed(u, q, n):
    return kron_all([u if k == q else I2 for k in range(n)])


def cx_matrix(c, t, n):
    dim = 1 << n
    m = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[c]:
            bits[t] ^= 1
        j = sum(b << (n - 1 - k) for k, b in enumerate(bits))
        m[j, i] = 1
    return m


def gate_unitary(gate, n):
    if gate.kind == "CX":
        return cx_matrix(gate.qubits[0], gate.qubits[1], n)
    u = ry(gate.theta) if gate.kind == "RY" else ONE_QUBIT[gate.kind]
    return embed(u, gate.qubits[0], n)


def dense_state(gates, n):
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1
    for g in gates:
        psi = gate_unitary(g, n) @ psi
    return psi


def expectation(psi, word):
    return float(np.real(np.vdot(psi, pauli_matrix(word) @ psi)))


def basis_ket(bits):
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int("".join(map(str, bits)), 2)] = 1
    return psi


def hamiltonian_matrix(h):
    from dynshadow.pauli import format_pauli

    dim = 1 << h.n_qubits
    m = np.zeros((dim, dim), dtype=complex)
    for c, p in h.terms:
        m += c * pauli_matrix(format_pauli(p))
    return m


_ROTATE = {"X": ONE_QUBIT["H"], "Y": ONE_QUBIT["H"] @ ONE_QUBIT["Sdg"], "Z": I2}


def snapshot_operator(basis, bits):
    """Uniform-basis snapshot, the tensor product of 3 U^dag|b><b|U - I."""
    factors = []
    for q, (a, b) in enumerate(zip(basis, bits)):
        u = _ROTATE[a]
        ket = np.zeros(2, dtype=complex)
        ket[b] = 1
        proj = u.conj().T @ np.outer(ket, ket) @ u
        factors.append(3 * proj - I2)
    return kron_all(factors)


def all_words(n, include_identity=False):
    for letters in itertools.product("IXYZ", repeat=n):
        w = "".join(letters)
        if include_identity or set(w) != {"I"}:
            yield w
