"""Observable estimation: exact expectations, 1-RDM measurement,
parameter-shift optimizers, shot sampling, and zero-noise extrapolation."""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .circuits import Circuit, Gate, ParamRef
from .pauli import (FermionOperator, PauliSum, expectation_matrix,
                    jordan_wigner)
from .simulator import NoiseModel, QuantumState, run

IMAG_TOL = 1e-9
OCC_TOL = 1e-8
SPIN_ASYMMETRY_TOL = 1e-6


def expectation(state: QuantumState, obs: PauliSum) -> float:
    """Exact <O> on either backend; tiny imaginary residue is discarded."""
    if obs.n_qubits != state.n_qubits:
        raise ValueError(f"observable on {obs.n_qubits} qubits, state on "
                         f"{state.n_qubits}")
    if not obs.is_hermitian():
        raise ValueError("observable is not Hermitian")
    mat = expectation_matrix(obs)
    if state.kind == "pure":
        vec = state.tensor.reshape(-1)
        value = complex(np.vdot(vec, mat @ vec))
    else:
        dim = 2 ** state.n_qubits
        rho = state.tensor.reshape(dim, dim)
        value = complex(np.einsum("ij,ji->", rho, mat))
    if abs(value.imag) > IMAG_TOL * max(1.0, abs(value.real)):
        raise ValueError(f"expectation has imaginary residue {value.imag}")
    return value.real


@dataclass
class Rdm1:
    """One-particle reduced density matrix block (impurity+bath combined)."""

    matrix: np.ndarray
    _occupations: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("1-RDM is not Hermitian")
        self.matrix = 0.5 * (m + m.conj().T)
        occ = np.linalg.eigvalsh(self.matrix)
        if occ.min() < -OCC_TOL or occ.max() > 1.0 + OCC_TOL:
            raise ValueError(f"occupations outside [0, 1]: {occ}")
        self._occupations = occ

    @property
    def occupations(self) -> np.ndarray:
        return self._occupations.copy()

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@functools.lru_cache(maxsize=4096)
def _hopping_parts(p: int, q: int, n_modes: int) -> tuple[PauliSum, PauliSum]:
    """Hermitian pieces h1 = c+_p c_q + h.c. and h2 = i c+_p c_q + h.c.;
    <c+_p c_q> = (<h1> - i <h2>) / 2."""
    hop = FermionOperator.creation(p) * FermionOperator.annihilation(q)
    h1 = hop + hop.adjoint()
    h2 = 1j * hop + (1j * hop).adjoint()
    return jordan_wigner(h1, n_modes), jordan_wigner(h2, n_modes)


@functools.lru_cache(maxsize=256)
def _number_op(p: int, n_modes: int) -> PauliSum:
    return jordan_wigner(FermionOperator.number(p), n_modes)


def _rdm_block(state: QuantumState, modes: tuple[int, ...]) -> np.ndarray:
    n_modes = state.n_qubits
    size = len(modes)
    out = np.zeros((size, size), dtype=complex)
    for i, p in enumerate(modes):
        out[i, i] = expectation(state, _number_op(p, n_modes))
        for j in range(i + 1, size):
            q = modes[j]
            h1, h2 = _hopping_parts(p, q, n_modes)
            val = 0.5 * (expectation(state, h1) - 1j * expectation(state, h2))
            out[i, j] = val
            out[j, i] = np.conj(val)
    return out


def measure_rdm1(state: QuantumState, n_c: int,
                 spin_average: bool = True) -> Rdm1:
    """Per-spin 1-RDM of an embedded-cluster state, entry by entry from
    Pauli expectations.  Modes are spin-major: up block first, down second;
    each block lists the n_c impurity orbitals then the n_c bath orbitals."""
    if state.n_qubits != 4 * n_c:
        raise ValueError(f"state has {state.n_qubits} qubits, expected "
                         f"{4 * n_c}")
    up = _rdm_block(state, tuple(range(2 * n_c)))
    if not spin_average:
        return Rdm1(up)
    down = _rdm_block(state, tuple(range(2 * n_c, 4 * n_c)))
    gap = np.max(np.abs(up - down))
    if gap > SPIN_ASYMMETRY_TOL:
        warnings.warn(f"spin blocks differ by {gap:.3e}; paramagnetic "
                      f"symmetry may be broken", stacklevel=2)
    return Rdm1(0.5 * (up + down))


def measure_rdm1_full(state: QuantumState) -> np.ndarray:
    """Full spin-resolved 1-RDM over every mode, including spin-mixing
    entries; used when the orbital basis is allowed to rotate freely."""
    block = _rdm_block(state, tuple(range(state.n_qubits)))
    return 0.5 * (block + block.conj().T)


class ShiftFit(NamedTuple):
    theta: float
    energy: float
    flat: bool


def _energy_closure(circuit: Circuit, obs: PauliSum,
                    noise: NoiseModel | None):
    def energy(bindings: Mapping[str, float]) -> float:
        return expectation(run(circuit, bindings=bindings, noise=noise), obs)
    return energy


def parameter_shift_minimize(circuit: Circuit, obs: PauliSum,
                             noise: NoiseModel | None = None) -> ShiftFit:
    """Analytic minimizer of a one-parameter sinusoidal landscape.

    Fits E(t) = a + b cos(t - c) from E(0) and E(+-pi/2), returns the
    minimizing angle and the energy measured there.  A vanishing amplitude
    sets the flat flag and keeps theta at 0.
    """
    names = circuit.parameter_names
    if len(names) != 1:
        raise ValueError(f"expected exactly one free parameter, got "
                         f"{list(names)}")
    name = names[0]
    energy = _energy_closure(circuit, obs, noise)
    e_zero = energy({name: 0.0})
    e_plus = energy({name: math.pi / 2})
    e_minus = energy({name: -math.pi / 2})
    a = 0.5 * (e_plus + e_minus)
    b_sin = 0.5 * (e_plus - e_minus)
    b_cos = e_zero - a
    amplitude = math.hypot(b_sin, b_cos)
    scale = max(abs(e_zero), abs(e_plus), abs(e_minus), 1.0)
    if amplitude < 1e-10 * scale:
        return ShiftFit(theta=0.0, energy=e_zero, flat=True)
    c = math.atan2(b_sin, b_cos)
    theta = math.remainder(c + math.pi, 2.0 * math.pi)
    return ShiftFit(theta=theta, energy=energy({name: theta}), flat=False)


def _check_rotosolve_support(circuit: Circuit) -> None:
    hits: dict[str, int] = {}
    for gate in circuit.gates:
        for slot in gate.params:
            if not isinstance(slot, ParamRef):
                continue
            if gate.kind not in ("RX", "RY", "RZ"):
                raise ValueError(f"parameter {slot.name!r} sits in a "
                                 f"{gate.kind} gate; only single-angle "
                                 f"rotations have the 2pi-sinusoidal "
                                 f"landscape this sweep assumes")
            if slot.scale != 1.0:
                raise ValueError(f"parameter {slot.name!r} enters with "
                                 f"scale {slot.scale}")
            hits[slot.name] = hits.get(slot.name, 0) + 1
    shared = [n for n, k in hits.items() if k > 1]
    if shared:
        raise ValueError(f"parameters appear in several gates: {shared}")


def rotosolve(circuit: Circuit, obs: PauliSum, n_cycles: int = 10,
              noise: NoiseModel | None = None) -> tuple[dict[str, float], float]:
    """Sequential per-parameter analytic minimization.

    pre: the circuit is fully bound (its bindings seed the sweep) and every
    parameter is a plain rotation angle.  Noiseless sweeps are monotone
    non-increasing in energy.
    """
    _check_rotosolve_support(circuit)
    names = circuit.parameter_names
    params = circuit.resolved_bindings()
    missing = [n for n in names if n not in params]
    if missing:
        raise ValueError(f"rotosolve needs initial values; missing {missing}")
    energy = _energy_closure(circuit, obs, noise)
    for _ in range(n_cycles):
        for name in names:
            theta = params[name]
            e_here = energy(params)
            e_plus = energy({**params, name: theta + math.pi / 2})
            e_minus = energy({**params, name: theta - math.pi / 2})
            shift = math.atan2(2.0 * e_here - e_plus - e_minus,
                               e_plus - e_minus)
            params[name] = math.remainder(theta - math.pi / 2 - shift,
                                          2.0 * math.pi)
    return params, energy(params)


def fold_cnots(circuit: Circuit, n_foldings: int = 1) -> Circuit:
    """Insert ``n_foldings`` identity CNOT pairs after every CNOT."""
    gates: list[Gate] = []
    for gate in circuit.gates:
        gates.append(gate)
        if gate.kind == "CNOT":
            gates.extend([gate] * (2 * n_foldings))
    return Circuit(circuit.n_qubits, tuple(gates), circuit.bindings)


def zne_linear(circuit: Circuit, obs: PauliSum,
               noise: NoiseModel | None = None,
               n_foldings: int = 1) -> float:
    """Two-point linear zero-noise extrapolation via CNOT-pair insertion.

    Noise levels {1, 1 + n_foldings} come from replacing each CNOT with
    2*n_foldings + 1 copies; the line through both energies is read off at
    level 0.  Two-qubit rotations must be expanded to CNOTs beforehand.
    """
    if n_foldings < 1:
        raise ValueError("need at least one folding")
    if circuit.count_cnots() == 0:
        raise ValueError("no CNOTs to fold")
    e_raw = expectation(run(circuit, noise=noise), obs)
    e_amp = expectation(run(fold_cnots(circuit, n_foldings), noise=noise),
                        obs)
    return e_raw + (e_raw - e_amp) / n_foldings


def sample_expectation(state: QuantumState, obs: PauliSum, n_shots: int,
                       seed: int | None = None) -> float:
    """Finite-shot estimate: each Pauli word is sampled as an independent
    binomial with success probability (1 + <P>)/2."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    if not obs.is_hermitian():
        raise ValueError("observable is not Hermitian")
    rng = np.random.default_rng(seed)
    identity = "I" * obs.n_qubits
    total = 0.0
    for word, coeff in obs.items():
        if word == identity:
            total += coeff.real
            continue
        exact = expectation(state, PauliSum({word: 1.0},
                                            n_qubits=obs.n_qubits))
        p_plus = min(1.0, max(0.0, 0.5 * (1.0 + exact)))
        hits = rng.binomial(n_shots, p_plus)
        total += coeff.real * (2.0 * hits / n_shots - 1.0)
    return total
