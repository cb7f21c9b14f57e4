"""Gates, parameterized circuits, and ansatz builders.

Circuits are immutable; binding parameters returns a new view.  Qubit 0 is
the leftmost (most significant) tensor factor, matching `pauli`.  Two-qubit
gate matrices are indexed by ``|q_first q_second>`` in the order the qubits
are listed on the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

VALID_KINDS = {"RX", "RY", "RZ", "X", "H", "CNOT", "FSIM", "RPQ"}
_N_PARAMS = {"RX": 1, "RY": 1, "RZ": 1, "X": 0, "H": 0, "CNOT": 0,
             "FSIM": 2, "RPQ": 1}

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class ParamRef:
    """Named parameter slot; resolves to ``scale * bindings[name]``."""
    name: str
    scale: float = 1.0

    def scaled(self, factor: float) -> "ParamRef":
        return ParamRef(self.name, self.scale * factor)

    def __str__(self) -> str:
        return self.name if self.scale == 1.0 else f"{self.name}*{self.scale!r}"


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple = ()
    axes: tuple[str, str] | None = None  # RPQ only

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("repeated qubit index")
        expected_arity = 2 if self.kind in ("CNOT", "FSIM", "RPQ") else 1
        if len(self.qubits) != expected_arity:
            raise ValueError(f"{self.kind} acts on {expected_arity} qubit(s)")
        if len(self.params) != _N_PARAMS[self.kind]:
            raise ValueError(f"{self.kind} takes {_N_PARAMS[self.kind]} "
                             f"parameter(s)")
        if (self.kind == "RPQ") != (self.axes is not None):
            raise ValueError("axes are for RPQ gates only")
        if self.axes is not None and any(a not in "XYZ" for a in self.axes):
            raise ValueError(f"invalid rotation axes {self.axes}")

    def param_names(self) -> list[str]:
        return [p.name for p in self.params if isinstance(p, ParamRef)]


def _resolve(slot, bindings: Mapping[str, float]) -> float:
    if isinstance(slot, ParamRef):
        try:
            return slot.scale * bindings[slot.name]
        except KeyError:
            raise ValueError(f"unbound parameter {slot.name!r}") from None
    return float(slot)


def gate_matrix(gate: Gate, bindings: Mapping[str, float] | None = None
                ) -> np.ndarray:
    """Dense 2x2 or 4x4 unitary of a gate with all parameters resolved."""
    bindings = bindings or {}
    kind = gate.kind
    if kind == "X":
        return _PAULI["X"]
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    if kind == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                         [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if kind in ("RX", "RY", "RZ"):
        theta = _resolve(gate.params[0], bindings)
        c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
        if kind == "RX":
            return np.array([[c, -1j * s], [-1j * s, c]])
        if kind == "RY":
            return np.array([[c, -s], [s, c]], dtype=complex)
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    if kind == "FSIM":
        theta = _resolve(gate.params[0], bindings)
        phi = _resolve(gate.params[1], bindings)
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[1, 0, 0, 0],
                         [0, c, -1j * s, 0],
                         [0, -1j * s, c, 0],
                         [0, 0, 0, np.exp(-1j * phi)]])
    if kind == "RPQ":
        theta = _resolve(gate.params[0], bindings)
        pq = np.kron(_PAULI[gate.axes[0]], _PAULI[gate.axes[1]])
        # (P o Q)^2 = 1, so the exponential closes on two terms.
        return math.cos(theta) * np.eye(4) + 1j * math.sin(theta) * pq
    raise AssertionError(kind)


# Basis changes bringing e^{i theta Z o Z} to e^{i theta P o Q}: the fragment
# applies U_A^dag first and U_A last, with U_X = RY(pi/2), U_Y = RZ(pi/2)
# RY(pi/2), U_Z = 1, so that U_A Z U_A^dag = A exactly.
_PRE = {"X": (("RY", -math.pi / 2),),
        "Y": (("RZ", -math.pi / 2), ("RY", -math.pi / 2)),
        "Z": ()}
_POST = {"X": (("RY", math.pi / 2),),
         "Y": (("RY", math.pi / 2), ("RZ", math.pi / 2)),
         "Z": ()}


def decompose_rpq(gate: Gate) -> tuple[Gate, ...]:
    """Elementary-gate fragment equal to the RPQ unitary (no phase slip)."""
    if gate.kind != "RPQ":
        raise ValueError("decompose_rpq expects an RPQ gate")
    qa, qb = gate.qubits
    slot = gate.params[0]
    rz_slot = slot.scaled(-2.0) if isinstance(slot, ParamRef) else -2.0 * slot
    frag: list[Gate] = []
    for q, axis in ((qa, gate.axes[0]), (qb, gate.axes[1])):
        frag.extend(Gate(k, (q,), (v,)) for k, v in _PRE[axis])
    frag.append(Gate("CNOT", (qa, qb)))
    frag.append(Gate("RZ", (qb,), (rz_slot,)))
    frag.append(Gate("CNOT", (qa, qb)))
    for q, axis in ((qa, gate.axes[0]), (qb, gate.axes[1])):
        frag.extend(Gate(k, (q,), (v,)) for k, v in _POST[axis])
    return tuple(frag)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]
    bindings: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for g in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g.kind} addresses qubit outside "
                                 f"register of size {self.n_qubits}")
        object.__setattr__(self, "bindings", dict(self.bindings))

    @property
    def parameter_names(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for g in self.gates:
            for name in g.param_names():
                seen.setdefault(name)
        return tuple(seen)

    @property
    def n_params(self) -> int:
        return len(self.parameter_names)

    def bind(self, values) -> "Circuit":
        """Attach parameter values; accepts a mapping or a flat vector."""
        if not isinstance(values, Mapping):
            names = self.parameter_names
            vec = np.asarray(values, dtype=float).ravel()
            if vec.size != len(names):
                raise ValueError(f"expected {len(names)} values, "
                                 f"got {vec.size}")
            values = dict(zip(names, vec))
        merged = dict(self.bindings)
        merged.update({k: float(v) for k, v in values.items()})
        return Circuit(self.n_qubits, self.gates, merged)

    def resolved_bindings(self, extra: Mapping[str, float] | None = None
                          ) -> dict[str, float]:
        merged = dict(self.bindings)
        if extra:
            merged.update(extra)
        return merged

    def count_gates(self) -> int:
        return len(self.gates)

    def count_cnots(self) -> int:
        return sum(1 for g in self.gates if g.kind == "CNOT")

    def to_text(self) -> str:
        lines = []
        for g in self.gates:
            bits = [g.kind if g.axes is None else f"RPQ:{g.axes[0]}{g.axes[1]}"]
            bits += [str(q) for q in g.qubits]
            bits += [str(p) if isinstance(p, ParamRef) else repr(float(p))
                     for p in g.params]
            lines.append(" ".join(bits))
        return "\n".join(lines)


def decompose_circuit(circuit: Circuit) -> Circuit:
    """Expand every RPQ gate into its elementary fragment."""
    gates: list[Gate] = []
    for g in circuit.gates:
        if g.kind == "RPQ":
            gates.extend(decompose_rpq(g))
        else:
            gates.append(g)
    return Circuit(circuit.n_qubits, tuple(gates), circuit.bindings)


def _mr_fragment(imp_up: int, bath_up: int, imp_dn: int, bath_dn: int,
                 theta) -> list[Gate]:
    # Prepares sqrt(n0)|imp_up imp_dn> + sqrt(1-n0)|bath_up bath_dn> from
    # vacuum, with theta = 2 arcsin(sqrt(n0)); both amplitudes nonnegative
    # for theta in [0, pi].
    return [
        Gate("RY", (imp_up,), (theta,)),
        Gate("CNOT", (imp_up, imp_dn)),
        Gate("X", (bath_up,)),
        Gate("CNOT", (imp_up, bath_up)),
        Gate("X", (bath_dn,)),
        Gate("CNOT", (imp_dn, bath_dn)),
    ]


def build_mr_nc1(theta="theta") -> Circuit:
    """Single-site multireference preparation on 4 qubits, one angle."""
    slot = ParamRef(theta) if isinstance(theta, str) else float(theta)
    return Circuit(4, tuple(_mr_fragment(0, 1, 2, 3, slot)))


def build_mrep(n_c: int = 2, n_layers: int = 4) -> Circuit:
    """Multireference excitation-preserving ansatz for the two-site cluster.

    Two MR preparations (one per orbital quadruple) are followed by
    ``n_layers`` brick-wall blocks of fSim gates; each fSim carries its own
    (theta, phi) pair, so 4 layers give 2 + 4*14 = 58 angles.
    """
    if n_c != 2:
        raise ValueError("only the two-site cluster is built here")
    n = 8
    gates: list[Gate] = []
    # Orbital quadruples (imp_up, bath_up, imp_dn, bath_dn) under the
    # spin-major mode ordering.
    gates += _mr_fragment(0, 2, 4, 6, ParamRef("prep_0"))
    gates += _mr_fragment(1, 3, 5, 7, ParamRef("prep_1"))
    even = [(0, 1), (2, 3), (4, 5), (6, 7)]
    odd = [(1, 2), (3, 4), (5, 6)]
    for layer in range(n_layers):
        for idx, (qa, qb) in enumerate(even + odd):
            tag = f"l{layer}_g{idx}"
            gates.append(Gate("FSIM", (qa, qb),
                              (ParamRef(tag + "_th"), ParamRef(tag + "_ph"))))
    return Circuit(n, tuple(gates))


def reference_occupation(n_qubits: int) -> tuple[int, ...]:
    """Half-filled determinant qubits: impurity-up and bath-down occupied."""
    n_c, rem = divmod(n_qubits, 4)
    if rem == 0:
        return tuple(range(n_c)) + tuple(range(3 * n_c, 4 * n_c))
    return tuple(range(n_qubits // 2))


def build_ldca(n_qubits: int = 8, n_cycles: int = 1) -> Circuit:
    """Low-depth circuit ansatz: matchgate cycles with an added ZZ rotation.

    Initial layer: one fixed RY preparing the reference determinant plus one
    variational RZ per qubit.  Each cycle has n_qubits/2 rounds of even-pair
    then odd-pair sublayers; every pair block carries the five rotations
    XY, YX, XX, ZZ, YY.  At (8 qubits, 1 cycle) this yields 148 angles and,
    once the two-qubit rotations are expanded, 1108 gates with 280 CNOTs.
    """
    if n_qubits % 2:
        raise ValueError("LDCA needs an even number of qubits")
    occupied = set(reference_occupation(n_qubits))
    gates: list[Gate] = []
    for q in range(n_qubits):
        gates.append(Gate("RY", (q,), (math.pi if q in occupied else 0.0,)))
        gates.append(Gate("RZ", (q,), (ParamRef(f"z_q{q}"),)))
    even = [(q, q + 1) for q in range(0, n_qubits - 1, 2)]
    odd = [(q, q + 1) for q in range(1, n_qubits - 1, 2)]
    order = (("X", "Y"), ("Y", "X"), ("X", "X"), ("Z", "Z"), ("Y", "Y"))
    for cyc in range(n_cycles):
        for rnd in range(n_qubits // 2):
            for qa, qb in even + odd:
                for pa, pb in order:
                    name = f"c{cyc}_r{rnd}_q{qa}{qb}_{pa.lower()}{pb.lower()}"
                    gates.append(Gate("RPQ", (qa, qb), (ParamRef(name),),
                                      axes=(pa, pb)))
    return Circuit(n_qubits, tuple(gates))


def build_hea_nc1() -> Circuit:
    """Hardware-efficient baseline: 8 angles, 3 CNOTs, 4 qubits.

    The X preparation is the CNOT-chain pre-image of the half-filled
    reference determinant, so all angles at zero output |1001> exactly.
    """
    gates: list[Gate] = [Gate("X", (0,)), Gate("X", (1,)), Gate("X", (3,))]
    gates += [Gate("RY", (q,), (ParamRef(f"a{q}"),)) for q in range(4)]
    gates += [Gate("CNOT", (q, q + 1)) for q in range(3)]
    gates += [Gate("RY", (q,), (ParamRef(f"b{q}"),)) for q in range(4)]
    return Circuit(4, tuple(gates))


def build_product_ry(n_qubits: int) -> Circuit:
    """Entanglement-free baseline: one RY per qubit acting on |0...0>."""
    gates = tuple(Gate("RY", (q,), (ParamRef(f"t{q}"),))
                  for q in range(n_qubits))
    return Circuit(n_qubits, gates)
