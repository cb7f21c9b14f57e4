"""Simulator backends checked against dense linear algebra and channel
identities computed by hand."""

import math

import numpy as np
import pytest

from risbvqe.circuits import (Circuit, Gate, ParamRef, build_hea_nc1,
                              build_mr_nc1,
                              build_mrep)
from risbvqe.simulator import (NoiseModel, QuantumState, apply_gate,
                               calibrate_noise, run, run_many)

from oracles import dense_state

RNG = np.random.default_rng(20240811)

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def embed_op(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    full = np.eye(1, dtype=complex)
    for q in range(n):
        full = np.kron(full, op if q == qubit else I2)
    return full


def depolarize_matrix(rho: np.ndarray, qubit: int, p: float,
                      n: int) -> np.ndarray:
    out = (1.0 - p) * rho
    for pauli in (SX, SY, SZ):
        full = embed_op(pauli, qubit, n)
        out = out + (p / 3.0) * (full @ rho @ full.conj().T)
    return out


class TestNoiseModel:
    def test_calibration_defaults(self):
        nm = calibrate_noise()
        assert abs(nm.p1 - 0.0024) < 1e-15
        assert abs(nm.p2 - (1.0 - math.sqrt(1.0 - 1.25 * 0.006))) < 1e-15
        assert abs(nm.p2 - 3.757e-3) < 5e-7

    def test_calibration_zero(self):
        nm = calibrate_noise(0.0, 0.0)
        assert nm.p1 == 0.0 and nm.p2 == 0.0

    def test_calibration_boundary(self):
        # eps2 = 0.8 zeroes the radicand, pushing p2 to 1 > 3/4.
        with pytest.raises(ValueError):
            calibrate_noise(0.0016, 0.8)
        with pytest.raises(ValueError):
            calibrate_noise(0.0016, 0.81)
        with pytest.raises(ValueError):
            calibrate_noise(-0.1, 0.006)

    def test_probability_bounds(self):
        with pytest.raises(ValueError):
            NoiseModel(0.8, 0.0)
        with pytest.raises(ValueError):
            NoiseModel(0.0, -0.01)
        with pytest.raises(ValueError):
            NoiseModel(0.1, 0.1, scale=1.5)

    def test_scale(self):
        nm = NoiseModel(0.3, 0.5, scale=0.5)
        assert nm.effective_p1 == 0.15
        assert nm.effective_p2 == 0.25
        again = nm.scaled(0.0)
        assert again.p1 == 0.3 and again.effective_p1 == 0.0


class TestQuantumState:
    def test_zero_states(self):
        pure = QuantumState.zero(3)
        vec = pure.vector()
        assert vec[0] == 1.0 and np.linalg.norm(vec) == 1.0
        mixed = QuantumState.zero(2, mixed=True)
        rho = mixed.density()
        assert rho[0, 0] == 1.0 and abs(np.trace(rho) - 1.0) < 1e-15

    def test_vector_round_trip(self):
        v = RNG.normal(size=8) + 1j * RNG.normal(size=8)
        v /= np.linalg.norm(v)
        state = QuantumState.from_vector(v)
        assert state.n_qubits == 3
        np.testing.assert_allclose(state.vector(), v)
        np.testing.assert_allclose(state.density(), np.outer(v, v.conj()))

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            QuantumState.from_vector(np.ones(3))
        with pytest.raises(ValueError):
            QuantumState.from_density(np.ones((4, 2)))

    def test_check_flags_bad_density(self):
        rho = np.diag([0.7, 0.4]).astype(complex)
        with pytest.raises(ValueError):
            QuantumState.from_density(rho).check()


class TestUnitaryAction:
    def test_x_gate(self):
        state = apply_gate(QuantumState.zero(1), Gate("X", (0,)))
        np.testing.assert_allclose(state.vector(), [0, 1])

    def test_input_not_mutated(self):
        start = QuantumState.zero(2)
        before = start.tensor.copy()
        apply_gate(start, Gate("H", (0,)))
        np.testing.assert_array_equal(start.tensor, before)

    def test_statevector_matches_dense(self):
        circ = build_mr_nc1(theta=1.234)
        got = run(circ).vector()
        np.testing.assert_allclose(got, dense_state(circ), atol=1e-12)

    def test_density_matches_statevector(self):
        circ = build_mrep(2, 2)
        values = RNG.uniform(-math.pi, math.pi, circ.n_params)
        bound = circ.bind(values)
        psi = run(bound).vector()
        rho = run(bound, mixed=True).density()
        np.testing.assert_allclose(rho, np.outer(psi, psi.conj()), atol=1e-10)

    def test_unbound_parameter_raises(self):
        circ = build_hea_nc1()
        with pytest.raises(ValueError):
            run(circ)

    def test_noise_requires_density(self):
        nm = NoiseModel(0.01, 0.01)
        with pytest.raises(ValueError):
            apply_gate(QuantumState.zero(1), Gate("X", (0,)), noise=nm)


class TestDepolarizing:
    def test_bit_flip_z_expectation(self):
        # X then depolarize: <Z> = -(1 - 4 p1 / 3).
        p1 = 0.0024
        nm = NoiseModel(p1, 0.0)
        state = apply_gate(QuantumState.zero(1, mixed=True),
                           Gate("X", (0,)), noise=nm)
        z = np.trace(state.density() @ SZ).real
        assert abs(z + (1.0 - 4.0 * p1 / 3.0)) < 1e-14

    def test_maximal_noise_erases(self):
        nm = NoiseModel(0.75, 0.0)
        state = apply_gate(QuantumState.zero(1, mixed=True),
                           Gate("X", (0,)), noise=nm)
        np.testing.assert_allclose(state.density(), I2 / 2, atol=1e-14)

    def test_matches_pauli_sum_form(self):
        v = RNG.normal(size=4) + 1j * RNG.normal(size=4)
        v /= np.linalg.norm(v)
        rho = np.outer(v, v.conj())
        p2 = 0.21
        nm = NoiseModel(0.0, p2)
        got = apply_gate(QuantumState.from_density(rho),
                         Gate("CNOT", (0, 1)), noise=nm).density()
        cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                         [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        want = cnot @ rho @ cnot.conj().T
        want = depolarize_matrix(want, 0, p2, 2)
        want = depolarize_matrix(want, 1, p2, 2)
        np.testing.assert_allclose(got, want, atol=1e-13)

    def test_channel_is_unital(self):
        nm = calibrate_noise()
        state = QuantumState.from_density(np.eye(4) / 4)
        for gate in (Gate("H", (0,)), Gate("CNOT", (0, 1)),
                     Gate("RY", (1,), (0.7,))):
            state = apply_gate(state, gate, noise=nm)
        np.testing.assert_allclose(state.density(), np.eye(4) / 4,
                                   atol=1e-14)

    def test_noisy_run_is_physical(self):
        circ = build_mr_nc1(theta=2.1)
        state = run(circ, noise=calibrate_noise())
        state.check(tol=1e-10)
        assert state.kind == "mixed"

    def test_zero_scale_equals_noiseless(self):
        circ = build_hea_nc1().bind(RNG.uniform(-1, 1, 8))
        quiet = run(circ, noise=calibrate_noise().scaled(0.0)).density()
        clean = run(circ, mixed=True).density()
        np.testing.assert_allclose(quiet, clean, atol=1e-14)

    def test_average_gate_fidelity(self):
        # The six Pauli eigenstates form a 2-design, so their mean fidelity
        # equals the Haar average (p0*d + 1)/(d + 1); with p1 = (3/2) eps
        # this is exactly 1 - eps.
        eps = 0.0016
        nm = NoiseModel(1.5 * eps, 0.0)
        basis = [np.array([1, 0]), np.array([0, 1]),
                 np.array([1, 1]) / math.sqrt(2),
                 np.array([1, -1]) / math.sqrt(2),
                 np.array([1, 1j]) / math.sqrt(2),
                 np.array([1, -1j]) / math.sqrt(2)]
        fids = []
        for v in basis:
            rho = np.outer(v, np.conj(v)).astype(complex)
            out = apply_gate(QuantumState.from_density(rho),
                             Gate("RZ", (0,), (0.0,)), noise=nm).density()
            fids.append((np.conj(v) @ out @ v).real)
        f_ave = np.mean(fids)
        p0 = 1.0 - nm.p1
        assert abs(f_ave - (p0 * 2 + 1) / 3) < 1e-14
        assert abs(f_ave - (1.0 - eps)) < 1e-14


class TestRunMany:
    def test_matches_sequential_pure(self):
        circ = build_mrep(2, 1)
        names = circ.parameter_names
        sets = [dict(zip(names, RNG.uniform(-math.pi, math.pi, len(names))))
                for _ in range(7)]
        batch = run_many(circ, sets)
        for bindings, state in zip(sets, batch):
            np.testing.assert_allclose(state.vector(),
                                       run(circ, bindings).vector(),
                                       atol=1e-12)

    def test_matches_sequential_noisy(self):
        circ = build_hea_nc1()
        names = circ.parameter_names
        nm = calibrate_noise()
        sets = [dict(zip(names, RNG.uniform(-1, 1, len(names))))
                for _ in range(3)]
        batch = run_many(circ, sets, noise=nm)
        for bindings, state in zip(sets, batch):
            assert state.kind == "mixed"
            np.testing.assert_allclose(state.density(),
                                       run(circ, bindings, noise=nm)
                                       .density(), atol=1e-12)

    def test_chunking_boundary(self):
        # more sets than one mixed-backend chunk holds
        circ = build_mr_nc1()
        sets = [{"theta": th} for th in np.linspace(-2.0, 2.0, 37)]
        nm = NoiseModel(0.01, 0.02)
        batch = run_many(circ, sets, noise=nm)
        assert len(batch) == 37
        np.testing.assert_allclose(batch[36].density(),
                                   run(circ, sets[36], noise=nm).density(),
                                   atol=1e-12)

    def test_all_gate_kinds_batch(self):
        ref = ParamRef
        circ = Circuit(2, (Gate("H", (0,)), Gate("X", (1,)),
                           Gate("RX", (0,), (ref("a"),)),
                           Gate("RY", (1,), (ref("b"),)),
                           Gate("RZ", (0,), (ref("c", scale=-2.0),)),
                           Gate("FSIM", (0, 1), (ref("d"), ref("e"))),
                           Gate("RPQ", (0, 1), (ref("f"),), axes=("Y", "X")),
                           Gate("CNOT", (1, 0))))
        names = circ.parameter_names
        sets = [dict(zip(names, RNG.uniform(-2, 2, len(names))))
                for _ in range(5)]
        for bindings, state in zip(sets, run_many(circ, sets)):
            np.testing.assert_allclose(state.vector(),
                                       run(circ, bindings).vector(),
                                       atol=1e-12)

    def test_empty_batch(self):
        assert run_many(build_mr_nc1(), []) == []

    def test_unbound_parameter_rejected(self):
        circ = build_hea_nc1()
        with pytest.raises(ValueError, match="unbound"):
            run_many(circ, [{"a0": 0.1}])
