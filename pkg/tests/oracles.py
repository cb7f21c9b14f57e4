"""Brute-force dense oracles shared across the test suite.

Everything here works by explicit bit manipulation on full 2^n arrays so it
stays independent of the package's tensor-contraction simulator and of the
Jordan-Wigner encoding.  Qubit 0 is the most significant bit, mode p sits on
qubit p.
"""

import numpy as np

from risbvqe.circuits import gate_matrix


def embed_gate(n_qubits, gate, bindings=None):
    """Full 2^n unitary of a single gate."""
    u = gate_matrix(gate, bindings or {})
    dim = 2 ** n_qubits
    full = np.zeros((dim, dim), dtype=complex)
    if len(gate.qubits) == 1:
        (q,) = gate.qubits
        shift = n_qubits - 1 - q
        for col in range(dim):
            b = (col >> shift) & 1
            base = col & ~(1 << shift)
            for nb in (0, 1):
                full[base | (nb << shift), col] += u[nb, b]
    else:
        qa, qb = gate.qubits
        sa, sb = n_qubits - 1 - qa, n_qubits - 1 - qb
        for col in range(dim):
            ba, bb = (col >> sa) & 1, (col >> sb) & 1
            base = col & ~(1 << sa) & ~(1 << sb)
            for row in range(4):
                na, nb = row >> 1, row & 1
                full[base | (na << sa) | (nb << sb), col] += u[row, 2 * ba + bb]
    return full


def dense_unitary(circuit, bindings=None):
    b = circuit.resolved_bindings(bindings)
    u = np.eye(2 ** circuit.n_qubits, dtype=complex)
    for g in circuit.gates:
        u = embed_gate(circuit.n_qubits, g, b) @ u
    return u


def dense_state(circuit, bindings=None):
    return dense_unitary(circuit, bindings)[:, 0]


def _mode_bit(index, mode, n):
    return (index >> (n - 1 - mode)) & 1


def _jw_parity(index, mode, n):
    # Occupation parity of modes 0..mode-1, i.e. the top `mode` bits.
    return -1 if bin(index >> (n - mode)).count("1") % 2 else 1


def oracle_rdm1_full(psi, n_modes):
    """<c†_p c_q> for all spin-orbitals, straight from amplitudes."""
    psi = np.asarray(psi).ravel()
    rdm = np.zeros((n_modes, n_modes), dtype=complex)
    for i, amp in enumerate(psi):
        if abs(amp) < 1e-16:
            continue
        for q in range(n_modes):
            if not _mode_bit(i, q, n_modes):
                continue
            s1 = _jw_parity(i, q, n_modes)
            j = i & ~(1 << (n_modes - 1 - q))
            for p in range(n_modes):
                if _mode_bit(j, p, n_modes):
                    continue
                s2 = _jw_parity(j, p, n_modes)
                k = j | (1 << (n_modes - 1 - p))
                rdm[p, q] += np.conj(psi[k]) * amp * s1 * s2
    return rdm


def partial_trace(psi, keep, n_qubits):
    """Reduced density matrix over ``keep`` (in the given order)."""
    tensor = np.asarray(psi).reshape((2,) * n_qubits)
    drop = [q for q in range(n_qubits) if q not in keep]
    perm = list(keep) + drop
    tensor = np.transpose(tensor, perm)
    tensor = tensor.reshape(2 ** len(keep), 2 ** len(drop))
    return tensor @ tensor.conj().T


PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def word_mat(word):
    full = np.eye(1, dtype=complex)
    for ch in word:
        full = np.kron(full, PAULI_1Q[ch])
    return full


def depolarize_rho(rho, qubit, p, n_qubits):
    """(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z) on one qubit."""
    out = (1.0 - p) * rho
    for ch in "XYZ":
        op = word_mat("".join(ch if q == qubit else "I"
                              for q in range(n_qubits)))
        out = out + (p / 3.0) * (op @ rho @ op)
    return out


def noisy_density(circuit, noise, bindings=None):
    """Density-matrix evolution with per-gate depolarizing channels."""
    b = circuit.resolved_bindings(bindings)
    dim = 2 ** circuit.n_qubits
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for g in circuit.gates:
        u = embed_gate(circuit.n_qubits, g, b)
        rho = u @ rho @ u.conj().T
        if noise is not None:
            p = noise.effective_p1 if len(g.qubits) == 1 else noise.effective_p2
            for q in g.qubits:
                rho = depolarize_rho(rho, q, p, circuit.n_qubits)
    return rho


def single_site_z(u, t=-0.25, mesh=40, beta=200.0):
    """Quasiparticle weight of the half-filled single-site cluster.

    The half-filled fixed point reduces to one scalar root equation: the
    four-state cluster at bath level zero and impurity level -U/2 has
    ground energy -U/4 - sqrt(U^2/16 + 4 D^2) and impurity-bath mixing
    sqrt(2) b / (2 + b^2) with b = E0 / (sqrt(2) D), which must equal R/2.
    """
    from scipy.optimize import brentq
    from scipy.special import expit

    k = 2.0 * np.pi * np.arange(mesh) / mesh
    kx, ky = np.meshgrid(k, k, indexing="ij")
    eps = 2.0 * t * (np.cos(kx) + np.cos(ky)).ravel()

    def mixing_gap(r):
        d = 2.0 * float((eps * r * expit(-beta * r * r * eps)).mean())
        e0 = -u / 4.0 - np.sqrt(u * u / 16.0 + 4.0 * d * d)
        b = e0 / (np.sqrt(2.0) * d)
        return np.sqrt(2.0) * b / (2.0 + b * b) - r / 2.0

    # The localized solution r = 0 always solves the equation; walk down
    # from r = 1 to bracket the metallic root only.
    grid = np.linspace(1.0, 0.01, 200)
    vals = [mixing_gap(r) for r in grid]
    for i in range(len(grid) - 1):
        if vals[i] <= 0.0 < vals[i + 1]:
            r_star = brentq(mixing_gap, grid[i + 1], grid[i], xtol=1e-13)
            return r_star ** 2
    return 0.0
