"""Exact circuit execution on small registers.

Two backends share one gate set: pure state vectors (noiseless) and density
matrices (with optional per-gate depolarizing noise).  States are stored as
rank-n (or rank-2n) tensors with one axis per qubit; qubit 0 is axis 0 and
the most significant bit of the flattened index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuits import Circuit, Gate, ParamRef, gate_matrix


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate depolarizing strengths; `scale` damps both probabilities."""

    p1: float
    p2: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p1 <= 0.75:
            raise ValueError(f"p1 = {self.p1} outside [0, 3/4]")
        if not 0.0 <= self.p2 <= 0.75:
            raise ValueError(f"p2 = {self.p2} outside [0, 3/4]")
        if not 0.0 <= self.scale <= 1.0:
            raise ValueError(f"scale = {self.scale} outside [0, 1]")

    @property
    def effective_p1(self) -> float:
        return self.scale * self.p1

    @property
    def effective_p2(self) -> float:
        return self.scale * self.p2

    def scaled(self, fraction: float) -> "NoiseModel":
        return NoiseModel(self.p1, self.p2, fraction)


def calibrate_noise(eps1: float = 0.0016, eps2: float = 0.006) -> NoiseModel:
    """Depolarizing strengths from randomized-benchmarking error rates:
    p1 = (3/2) eps1 and p2 = 1 - sqrt(1 - (5/4) eps2)."""
    if eps1 < 0 or eps2 < 0:
        raise ValueError("error rates must be nonnegative")
    radicand = 1.0 - 1.25 * eps2
    if radicand < 0:
        raise ValueError(f"1 - (5/4) eps2 = {radicand} is negative")
    return NoiseModel(p1=1.5 * eps1, p2=1.0 - math.sqrt(radicand))


class QuantumState:
    """Either a pure amplitude tensor or a density-matrix tensor."""

    __slots__ = ("n_qubits", "kind", "tensor")

    def __init__(self, n_qubits: int, kind: str, tensor: np.ndarray):
        if kind not in ("pure", "mixed"):
            raise ValueError(kind)
        self.n_qubits = n_qubits
        self.kind = kind
        self.tensor = tensor

    @classmethod
    def zero(cls, n_qubits: int, mixed: bool = False) -> "QuantumState":
        if mixed:
            rho = np.zeros((2,) * (2 * n_qubits), dtype=complex)
            rho[(0,) * (2 * n_qubits)] = 1.0
            return cls(n_qubits, "mixed", rho)
        psi = np.zeros((2,) * n_qubits, dtype=complex)
        psi[(0,) * n_qubits] = 1.0
        return cls(n_qubits, "pure", psi)

    @classmethod
    def from_vector(cls, vec) -> "QuantumState":
        vec = np.asarray(vec, dtype=complex).ravel()
        n = int(round(math.log2(vec.size)))
        if 2 ** n != vec.size:
            raise ValueError("amplitude vector length is not a power of two")
        return cls(n, "pure", vec.reshape((2,) * n))

    @classmethod
    def from_density(cls, rho) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        n = int(round(math.log2(rho.shape[0])))
        if rho.shape != (2 ** n, 2 ** n):
            raise ValueError("density matrix must be square power-of-two")
        return cls(n, "mixed", rho.reshape((2,) * (2 * n)))

    def vector(self) -> np.ndarray:
        if self.kind != "pure":
            raise ValueError("not a pure state")
        return self.tensor.reshape(-1).copy()

    def density(self) -> np.ndarray:
        dim = 2 ** self.n_qubits
        if self.kind == "pure":
            v = self.tensor.reshape(-1)
            return np.outer(v, v.conj())
        return self.tensor.reshape(dim, dim).copy()

    def check(self, tol: float = 1e-10) -> None:
        """Assert the norm/trace/positivity invariants."""
        if self.kind == "pure":
            norm = np.linalg.norm(self.tensor)
            if abs(norm - 1.0) > tol:
                raise ValueError(f"state norm {norm} != 1")
            return
        rho = self.density()
        if abs(np.trace(rho).real - 1.0) > tol or abs(np.trace(rho).imag) > tol:
            raise ValueError("density matrix trace != 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValueError("density matrix not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise ValueError("density matrix not positive semidefinite")


def _apply_unitary(tensor: np.ndarray, u: np.ndarray,
                   axes: tuple[int, ...]) -> np.ndarray:
    if len(axes) == 1:
        out = np.tensordot(u, tensor, axes=([1], [axes[0]]))
        return np.moveaxis(out, 0, axes[0])
    u4 = u.reshape(2, 2, 2, 2)
    out = np.tensordot(u4, tensor, axes=([2, 3], list(axes)))
    return np.moveaxis(out, (0, 1), axes)


def _depolarize(tensor: np.ndarray, qubit: int, p: float,
                n_qubits: int) -> np.ndarray:
    # (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)
    #   = (1 - 4p/3) rho + (4p/3) (I/2 o tr_q rho)
    if p == 0.0:
        return tensor
    w = 4.0 * p / 3.0
    reduced = np.trace(tensor, axis1=qubit, axis2=n_qubits + qubit)
    out = (1.0 - w) * tensor
    idx: list = [slice(None)] * (2 * n_qubits)
    for b in (0, 1):
        idx[qubit] = b
        idx[n_qubits + qubit] = b
        out[tuple(idx)] += (0.5 * w) * reduced
    return out


def apply_gate(state: QuantumState, gate: Gate,
               bindings: Mapping[str, float] | None = None,
               noise: NoiseModel | None = None) -> QuantumState:
    """Unitary action followed, on the mixed backend, by one depolarizing
    channel per touched qubit (p1 for one-qubit gates, p2 per qubit of a
    two-qubit gate)."""
    if noise is not None and state.kind == "pure":
        raise ValueError("noise requires the density-matrix backend")
    u = gate_matrix(gate, bindings or {})
    n = state.n_qubits
    if state.kind == "pure":
        return QuantumState(n, "pure",
                            _apply_unitary(state.tensor, u, gate.qubits))
    tensor = _apply_unitary(state.tensor, u, gate.qubits)
    col_axes = tuple(n + q for q in gate.qubits)
    tensor = _apply_unitary(tensor, u.conj(), col_axes)
    if noise is not None:
        p = (noise.effective_p1 if len(gate.qubits) == 1
             else noise.effective_p2)
        for q in gate.qubits:
            tensor = _depolarize(tensor, q, p, n)
    return QuantumState(n, "mixed", tensor)


def run(circuit: Circuit, bindings: Mapping[str, float] | None = None,
        noise: NoiseModel | None = None,
        mixed: bool | None = None) -> QuantumState:
    """Execute from |0...0>; the backend follows the noise setting unless
    forced with `mixed`."""
    resolved = circuit.resolved_bindings(bindings)
    missing = [p for p in circuit.parameter_names if p not in resolved]
    if missing:
        raise ValueError(f"unbound parameters: {missing}")
    if mixed is None:
        mixed = noise is not None
    state = QuantumState.zero(circuit.n_qubits, mixed=mixed)
    for gate in circuit.gates:
        state = apply_gate(state, gate, resolved, noise)
    return state


def _resolve_batch(slot, arrays: Mapping[str, np.ndarray],
                   size: int) -> np.ndarray:
    if isinstance(slot, ParamRef):
        return slot.scale * arrays[slot.name]
    return np.full(size, float(slot))


_PAULI_1Q = {"X": np.array([[0, 1], [1, 0]], dtype=complex),
             "Y": np.array([[0, -1j], [1j, 0]]),
             "Z": np.array([[1, 0], [0, -1]], dtype=complex)}


def _gate_matrix_batch(gate: Gate, arrays: Mapping[str, np.ndarray],
                       size: int) -> np.ndarray:
    """Stack of per-element gate unitaries, shape (size, d, d)."""
    kind = gate.kind
    if kind in ("X", "H", "CNOT"):
        fixed = gate_matrix(gate)
        return np.broadcast_to(fixed, (size,) + fixed.shape)
    if kind in ("RX", "RY", "RZ"):
        theta = _resolve_batch(gate.params[0], arrays, size)
        c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
        m = np.zeros((size, 2, 2), dtype=complex)
        if kind == "RX":
            m[:, 0, 0] = m[:, 1, 1] = c
            m[:, 0, 1] = m[:, 1, 0] = -1j * s
        elif kind == "RY":
            m[:, 0, 0] = m[:, 1, 1] = c
            m[:, 0, 1], m[:, 1, 0] = -s, s
        else:
            m[:, 0, 0], m[:, 1, 1] = c - 1j * s, c + 1j * s
        return m
    if kind == "FSIM":
        theta = _resolve_batch(gate.params[0], arrays, size)
        phi = _resolve_batch(gate.params[1], arrays, size)
        m = np.zeros((size, 4, 4), dtype=complex)
        m[:, 0, 0] = 1.0
        m[:, 1, 1] = m[:, 2, 2] = np.cos(theta)
        m[:, 1, 2] = m[:, 2, 1] = -1j * np.sin(theta)
        m[:, 3, 3] = np.exp(-1j * phi)
        return m
    if kind == "RPQ":
        theta = _resolve_batch(gate.params[0], arrays, size)
        pq = np.kron(_PAULI_1Q[gate.axes[0]], _PAULI_1Q[gate.axes[1]])
        return (np.cos(theta)[:, None, None] * np.eye(4)
                + 1j * np.sin(theta)[:, None, None] * pq)
    raise AssertionError(kind)


def _apply_unitary_batch(tensor: np.ndarray, u: np.ndarray,
                         axes: tuple[int, ...]) -> np.ndarray:
    # tensor axis 0 indexes the batch; `axes` are absolute tensor axes.
    k = len(axes)
    moved = np.moveaxis(tensor, axes, range(1, 1 + k))
    shape = moved.shape
    flat = moved.reshape(shape[0], 2 ** k, -1)
    out = np.einsum("bij,bjr->bir", u, flat)
    return np.moveaxis(out.reshape(shape), range(1, 1 + k), axes)


def _run_chunk(circuit: Circuit, arrays: Mapping[str, np.ndarray],
               size: int) -> list[QuantumState]:
    n = circuit.n_qubits
    tensor = np.zeros((size,) + (2,) * n, dtype=complex)
    tensor[(slice(None),) + (0,) * n] = 1.0
    for gate in circuit.gates:
        u = _gate_matrix_batch(gate, arrays, size)
        tensor = _apply_unitary_batch(tensor, u,
                                      tuple(1 + q for q in gate.qubits))
    return [QuantumState(n, "pure", tensor[i]) for i in range(size)]


def run_many(circuit: Circuit,
             bindings_seq: Sequence[Mapping[str, float]],
             noise: NoiseModel | None = None,
             mixed: bool | None = None) -> list[QuantumState]:
    """Equivalent of [run(circuit, b, ...) for b in bindings_seq].

    Pure-state workloads travel through the gate sequence together, which
    amortizes the per-gate bookkeeping; gradient-style batches of nearby
    parameter sets gain an order of magnitude.  Density-matrix tensors are
    memory-bound, so the mixed backend stays sequential.
    """
    if noise is not None and mixed is False:
        raise ValueError("noise requires the density-matrix backend")
    if mixed is None:
        mixed = noise is not None
    if mixed:
        return [run(circuit, b, noise=noise, mixed=True)
                for b in bindings_seq]
    resolved = [circuit.resolved_bindings(b) for b in bindings_seq]
    for rb in resolved:
        missing = [p for p in circuit.parameter_names if p not in rb]
        if missing:
            raise ValueError(f"unbound parameters: {missing}")
    if not resolved:
        return []
    names = circuit.parameter_names
    out: list[QuantumState] = []
    chunk = 256
    for lo in range(0, len(resolved), chunk):
        part = resolved[lo:lo + chunk]
        arrays = {name: np.array([rb[name] for rb in part], dtype=float)
                  for name in names}
        out.extend(_run_chunk(circuit, arrays, len(part)))
    return out
