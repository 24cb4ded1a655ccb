"""
Gate-level circuits for Trotterized Hadamard tests.

Wire 0 is the ancilla, wires 1..4 are the targets T1..T4. A 4-qubit
PauliString acts on the targets with its qubit k on wire k + 1.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

import config
from .exceptions import CircuitError
from .model_service import ModelParams, ModelService, TrotterOrdering, TWO_BODY_PAIRS
from .pauli_service import PauliString
from . import two_qubit_synthesis

logger = logging.getLogger(__name__)

ANCILLA = 0
TARGETS = tuple(range(1, config.N_TARGET_QUBITS + 1))
N_WIRES = config.N_TARGET_QUBITS + 1

# Block tags carried by gates
TAG_ONE_BODY = "one_body"
TAG_TWO_BODY = "two_body"
TAG_THREE_BODY = "three_body"
TAG_RELABEL = "relabel"
TAG_CONTROL_RIGHT = "control_right"
TAG_CONTROL_LEFT = "control_left"
TAG_MEASURE = "measure"


class GateKind(str, Enum):
    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    S = "S"
    SDG = "SDG"
    RZ = "RZ"
    RX = "RX"
    RY = "RY"
    CNOT = "CNOT"
    CZ = "CZ"
    SWAP = "SWAP"


ROTATIONS = {GateKind.RZ, GateKind.RX, GateKind.RY}
TWO_QUBIT = {GateKind.CNOT, GateKind.CZ, GateKind.SWAP}
ENTANGLING_COST = {GateKind.CNOT: 1, GateKind.CZ: 1, GateKind.SWAP: 3}
_SELF_INVERSE = {GateKind.H, GateKind.X, GateKind.Y, GateKind.Z, GateKind.CNOT, GateKind.CZ, GateKind.SWAP}
_SYMMETRIC = {GateKind.CZ, GateKind.SWAP}

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_FIXED_MATRICES = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT_HALF,
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.SDG: np.array([[1, 0], [0, -1j]], dtype=complex),
    GateKind.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.CZ: np.diag([1, 1, 1, -1]).astype(complex),
    GateKind.SWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: Tuple[int, ...]
    theta: Optional[float] = None
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        expected = 2 if self.kind in TWO_QUBIT else 1
        if len(self.qubits) != expected:
            raise CircuitError(f"{self.kind.value} acts on {expected} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {self.kind.value} {self.qubits}")
        if self.kind in ROTATIONS:
            if self.theta is None or not math.isfinite(self.theta):
                raise CircuitError(f"{self.kind.value} needs a finite angle")
        elif self.theta is not None:
            raise CircuitError(f"{self.kind.value} takes no angle")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind in _FIXED_MATRICES:
            return _FIXED_MATRICES[self.kind]
        half = self.theta / 2.0
        cos, sin = math.cos(half), math.sin(half)
        if self.kind is GateKind.RZ:
            return np.diag([np.exp(-1j * half), np.exp(1j * half)])
        if self.kind is GateKind.RX:
            return np.array([[cos, -1j * sin], [-1j * sin, cos]], dtype=complex)
        return np.array([[cos, -sin], [sin, cos]], dtype=complex)

    @property
    def is_entangling(self) -> bool:
        return self.kind in TWO_QUBIT

    def inverse(self) -> "Gate":
        if self.kind in ROTATIONS:
            return replace(self, theta=-self.theta)
        if self.kind is GateKind.S:
            return replace(self, kind=GateKind.SDG)
        if self.kind is GateKind.SDG:
            return replace(self, kind=GateKind.S)
        return self

    def is_inverse_of(self, other: "Gate") -> bool:
        if self.kind in _SYMMETRIC and other.kind is self.kind:
            return set(self.qubits) == set(other.qubits)
        if self.qubits != other.qubits:
            return False
        inverse = self.inverse()
        if self.kind in ROTATIONS:
            return other.kind is self.kind and abs(other.theta - inverse.theta) < 1e-15
        return other.kind is inverse.kind

    def relabeled(self, mapping: Dict[int, int]) -> "Gate":
        return replace(self, qubits=tuple(mapping.get(q, q) for q in self.qubits))

    def to_line(self) -> str:
        fields = [self.kind.value] + [str(q) for q in self.qubits]
        if self.theta is not None:
            fields.append(repr(float(self.theta)))
        line = " ".join(fields)
        return f"{line} # {self.tag}" if self.tag else line


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: Tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for gate in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in gate.qubits):
                raise CircuitError(f"gate {gate.to_line()} out of range for {self.n_qubits} qubits")

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise CircuitError("cannot concatenate circuits of different widths")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def touches(self, qubit: int) -> bool:
        return any(qubit in gate.qubits for gate in self.gates)

    def tagged(self, tag: str) -> "Circuit":
        return Circuit(self.n_qubits, [replace(g, tag=tag) for g in self.gates])

    def dump(self) -> str:
        return "\n".join(gate.to_line() for gate in self.gates) + "\n"

    @classmethod
    def parse(cls, text: str, n_qubits: int = N_WIRES) -> "Circuit":
        gates = []
        for raw in text.splitlines():
            body, _, tag = raw.partition("#")
            fields = body.split()
            if not fields:
                continue
            kind = GateKind(fields[0].upper())
            arity = 2 if kind in TWO_QUBIT else 1
            qubits = tuple(int(f) for f in fields[1:1 + arity])
            theta = float(fields[1 + arity]) if kind in ROTATIONS else None
            gates.append(Gate(kind, qubits, theta, tag.strip()))
        return cls(n_qubits, gates)


def gate(kind: str, *qubits: int, theta: Optional[float] = None, tag: str = "") -> Gate:
    return Gate(GateKind(kind), tuple(qubits), theta, tag)


def apply_matrix(tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract a 2^k x 2^k matrix into the given qubit axes of a tensor"""
    k = len(axes)
    matrix = np.asarray(matrix).reshape((2,) * (2 * k))
    moved = np.tensordot(matrix, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(moved, list(range(k)), list(axes))


def apply_gate(tensor: np.ndarray, gate_: Gate, axes: Sequence[int]) -> np.ndarray:
    return apply_matrix(tensor, gate_.matrix, axes)


def circuit_unitary(circuit: Circuit, wires: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Dense unitary of a circuit restricted to ``wires`` (default: all wires)

    Big-endian: the first listed wire is the most significant tensor factor.
    """
    wires = tuple(range(circuit.n_qubits)) if wires is None else tuple(wires)
    position = {wire: index for index, wire in enumerate(wires)}
    n = len(wires)
    dim = 1 << n
    tensor = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for gate_ in circuit.gates:
        try:
            axes = [position[q] for q in gate_.qubits]
        except KeyError as error:
            raise CircuitError(f"gate {gate_.to_line()} acts outside wires {wires}") from error
        tensor = apply_gate(tensor, gate_, axes)
    return tensor.reshape(dim, dim)


def cnot_count(circuit: Circuit) -> int:
    """Entangling-gate count: CNOT = CZ = 1, SWAP = 3"""
    return sum(ENTANGLING_COST.get(g.kind, 0) for g in circuit.gates)


def _wire(qubit: int) -> int:
    return qubit + 1


# Published CNOT counts per ordering for (left, right) correlator structures
CORRELATOR_STRUCTURES = {
    "Z1(t)Z1": ("ZIII", "ZIII"),
    "Z1(t)Z3": ("ZIII", "IIZI"),
    "Z1Z2(t)Z3Z4": ("ZZII", "IIZZ"),
    "Z1Z2(t)Z1Z2": ("ZZII", "ZZII"),
}
PUBLISHED_CNOT_COUNTS = {
    "A1": {"Z1(t)Z1": 19, "Z1(t)Z3": 25, "Z1Z2(t)Z3Z4": 25, "Z1Z2(t)Z1Z2": 30},
    "A2": {"Z1(t)Z1": 6, "Z1(t)Z3": 9, "Z1Z2(t)Z3Z4": 15, "Z1Z2(t)Z1Z2": 9},
    "B1": {"Z1(t)Z1": 26, "Z1(t)Z3": 28, "Z1Z2(t)Z3Z4": 28, "Z1Z2(t)Z1Z2": 29},
    "B2": {"Z1(t)Z1": 8, "Z1(t)Z3": 11, "Z1Z2(t)Z3Z4": 15, "Z1Z2(t)Z1Z2": 13},
}


class CircuitService:
    def __init__(self, model_service: ModelService, t_connectivity: bool = False):
        """
        Initialize Circuit service

        Args:
            model_service: Service providing the Hamiltonian couplings
            t_connectivity: Lower controlled Pauli strings through a single
                ancilla port (parity ladders plus SWAP routing)
        """
        self.model_service = model_service
        self.t_connectivity = t_connectivity

    def three_body_propagator(self, tau: float, U: float, coefficient: Optional[float] = None) -> Circuit:
        """
        exp(-i tau g sum_{i<j<k} Z_i Z_j Z_k) with g = -U/4 unless overridden

        Four parity rotations on CNOT ladders; one SWAP inside the ladder and
        two label-restoring SWAPs at the end.

        Args:
            tau: Evolution time
            U: Two-body on-site energy
            coefficient: Explicit ZZZ coefficient g

        Returns:
            Circuit on the target wires
        """
        g = -U / 4.0 if coefficient is None else coefficient
        theta = 2.0 * tau * g
        t1, t2, t3, t4 = TARGETS
        spec = [
            ("CNOT", t2, t3), ("CNOT", t3, t4), ("RZ", t4), ("CNOT", t3, t4),
            ("CNOT", t1, t4), ("CNOT", t2, t3), ("CNOT", t4, t3), ("RZ", t3), ("CNOT", t4, t3),
            ("CNOT", t4, t1), ("SWAP", t3, t2), ("CNOT", t3, t4), ("RZ", t4), ("CNOT", t3, t4),
            ("CNOT", t1, t4), ("CNOT", t2, t3), ("CNOT", t4, t3), ("RZ", t3), ("CNOT", t4, t3),
            ("CNOT", t2, t3),
        ]
        gates = [
            gate(kind, *qubits, theta=theta if kind == "RZ" else None, tag=TAG_THREE_BODY)
            for kind, *qubits in spec
        ]
        # Wires now hold (b4, b3, b2, b1); restore the labels
        gates.append(gate("SWAP", t1, t4, tag=TAG_RELABEL))
        gates.append(gate("SWAP", t3, t2, tag=TAG_RELABEL))
        return Circuit(N_WIRES, gates)

    def _one_body(self, params: ModelParams, tau: float) -> List[Gate]:
        return [gate("RX", w, theta=-4.0 * params.t * tau, tag=TAG_ONE_BODY) for w in TARGETS]

    def _two_body(self, params: ModelParams, tau: float) -> List[Gate]:
        gates = []
        for i, j in TWO_BODY_PAIRS:
            gates += [
                gate("CNOT", i, j, tag=TAG_TWO_BODY),
                gate("RZ", j, theta=-tau * params.U / 2.0, tag=TAG_TWO_BODY),
                gate("CNOT", i, j, tag=TAG_TWO_BODY),
            ]
        return gates

    def _block(self, params: ModelParams, tau: float, i: int, j: int) -> List[Gate]:
        tag = f"block_{i}{j}"
        return [
            Gate(GateKind(kind), qubits, theta, tag)
            for kind, qubits, theta in two_qubit_synthesis.block_gates(i, j, -2.0 * params.t, -params.U / 4.0, tau)
        ]

    def trotter_step(self, ordering: TrotterOrdering, tau: float, params: ModelParams, steps: int = 1) -> Circuit:
        """
        Product-formula propagator for one ordering (constant term dropped)

        Args:
            ordering: A1, A2, B1 or B2
            tau: Total evolution time
            params: Model couplings
            steps: Repetitions of the step at tau/steps

        Returns:
            Circuit on the target wires
        """
        if steps < 1:
            raise CircuitError("steps must be >= 1")
        ordering = TrotterOrdering(ordering)
        dt = tau / steps
        three_body = list(self.three_body_propagator(dt, params.U, params.three_body_coefficient).gates)
        if ordering is TrotterOrdering.A1:
            step = self._two_body(params, dt) + three_body + self._one_body(params, dt)
        elif ordering is TrotterOrdering.A2:
            step = self._one_body(params, dt) + self._two_body(params, dt) + three_body
        elif ordering is TrotterOrdering.B1:
            step = three_body + self._block(params, dt, 2, 3) + self._block(params, dt, 1, 4)
        else:
            step = self._block(params, dt, 2, 3) + self._block(params, dt, 1, 4) + three_body
        return Circuit(N_WIRES, step * steps)

    def controlled_pauli(self, pauli: PauliString, tag: str, port_support: Optional[Tuple[int, ...]] = None) -> List[Gate]:
        """
        Controlled-P from the ancilla, lowered to CZ/CNOT plus single-qubit gates

        Args:
            pauli: 4-qubit PauliString acting on the targets
            tag: Tag for the emitted gates
            port_support: In T-connectivity mode, target wires already adjacent
                to the ancilla port (None: this is the opening control)

        Returns:
            Time-ordered gate list
        """
        before: List[Gate] = []
        after: List[Gate] = []
        wires = []
        for qubit in pauli.support:
            wire = _wire(qubit)
            wires.append(wire)
            factor = pauli.factor(qubit)
            if factor == "X":
                before.append(gate("H", wire, tag=tag))
                after.insert(0, gate("H", wire, tag=tag))
            elif factor == "Y":
                before += [gate("SDG", wire, tag=tag), gate("H", wire, tag=tag)]
                after[:0] = [gate("H", wire, tag=tag), gate("S", wire, tag=tag)]

        if not wires:
            core: List[Gate] = []
        elif not self.t_connectivity:
            core = [gate("CZ", ANCILLA, w, tag=tag) for w in wires]
        else:
            core = self._routed_z_control(wires, tag, port_support)

        phase_gate = {1: "S", 2: "Z", 3: "SDG"}.get(pauli.phase_exp)
        tail = [gate(phase_gate, ANCILLA, tag=tag)] if phase_gate else []
        return before + core + after + tail

    def _routed_z_control(self, wires: List[int], tag: str, port_support: Optional[Tuple[int, ...]]) -> List[Gate]:
        if port_support is None:
            port = wires[0]
            ladder = [gate("CNOT", w, port, tag=tag) for w in wires[1:]]
            return ladder + [gate("CZ", ANCILLA, port, tag=tag)] + list(reversed(ladder))

        adjacent = list(port_support) if port_support else [wires[0]]
        free = [w for w in adjacent if w not in wires]
        swaps: List[Gate] = []
        routed = []
        for w in wires:
            if w in adjacent:
                routed.append(w)
                continue
            if not free:
                raise CircuitError(f"cannot route control on wires {wires} through port wires {adjacent}")
            slot = free.pop(0)
            swaps.append(gate("SWAP", w, slot, tag=tag))
            routed.append(slot)
        routed.sort()
        port = adjacent[0] if adjacent[0] in routed else routed[0]
        ladder = [gate("CNOT", w, port, tag=tag) for w in routed if w != port]
        uncompute = list(reversed(ladder)) + list(reversed(swaps))
        return swaps + ladder + [gate("CZ", ANCILLA, port, tag=tag)] + uncompute

    def hadamard_test_circuit(self, p_right: PauliString, p_left: PauliString, evolution: Circuit,
                              init: Optional[Circuit] = None, measure_basis: str = "X") -> Circuit:
        """
        Hadamard test whose ancilla reads s = <psi| V^dag P_left V P_right |psi>

        Args:
            p_right: Pauli string applied before the evolution
            p_left: Pauli string applied after the evolution
            evolution: Target-only circuit V
            init: Optional target state-preparation circuit
            measure_basis: 'X' gives <X> = Re s, 'Y' gives <Y> = -Im s

        Returns:
            Circuit on ancilla + targets, ending with the ancilla basis change
        """
        basis = measure_basis.upper()
        if basis not in ("X", "Y", "Z"):
            raise CircuitError(f"unsupported measurement basis {measure_basis!r}")
        if evolution.touches(ANCILLA):
            raise CircuitError("evolution circuit must not act on the ancilla")
        if init is not None and init.touches(ANCILLA):
            raise CircuitError("state preparation must not act on the ancilla")

        gates: List[Gate] = list(init.gates) if init is not None else []
        gates.append(gate("H", ANCILLA, tag=TAG_CONTROL_RIGHT))
        gates += self.controlled_pauli(p_right, TAG_CONTROL_RIGHT)
        gates.append(gate("X", ANCILLA, tag=TAG_CONTROL_RIGHT))
        gates += evolution.gates
        port_support = tuple(_wire(q) for q in p_right.support)
        gates += self.controlled_pauli(p_left, TAG_CONTROL_LEFT, port_support=port_support)
        if basis == "X":
            gates.append(gate("H", ANCILLA, tag=TAG_MEASURE))
        elif basis == "Y":
            gates += [gate("SDG", ANCILLA, tag=TAG_MEASURE), gate("H", ANCILLA, tag=TAG_MEASURE)]
        return Circuit(N_WIRES, gates)

    def optimize(self, circuit: Circuit) -> Circuit:
        """
        Rewrites that preserve the ancilla statistics

        - a three-body block directly before a diagonal closing control is dropped
        - label-restoring SWAPs are absorbed by relabeling later gates
        - target-only gates after the last ancilla interaction are dropped
        - H·CZ·H on a target becomes CNOT, adjacent inverse pairs cancel

        Args:
            circuit: Hadamard-test circuit

        Returns:
            Optimized circuit
        """
        gates = self._drop_commuting_three_body(list(circuit.gates))
        gates = self._absorb_relabel_swaps(gates)
        previous = None
        while previous != gates:
            previous = gates
            gates = self._drop_terminal_target_gates(gates)
            gates = self._peephole(gates)
        optimized = Circuit(circuit.n_qubits, gates)
        logger.debug("optimize: %d -> %d gates, %d -> %d CNOTs",
                     len(circuit), len(optimized), cnot_count(circuit), cnot_count(optimized))
        return optimized

    @staticmethod
    def _drop_commuting_three_body(gates: List[Gate]) -> List[Gate]:
        closing = [k for k, g in enumerate(gates) if g.tag == TAG_CONTROL_LEFT]
        if not closing:
            return gates
        first_close = closing[0]
        # Only Z-type controls commute with the diagonal block
        if any(not g.is_entangling and ANCILLA not in g.qubits for g in gates[first_close:closing[-1] + 1]
               if g.tag == TAG_CONTROL_LEFT):
            return gates
        start = first_close
        while start > 0 and gates[start - 1].tag in (TAG_THREE_BODY, TAG_RELABEL):
            start -= 1
        if start == first_close:
            return gates
        return gates[:start] + gates[first_close:]

    @staticmethod
    def _absorb_relabel_swaps(gates: List[Gate]) -> List[Gate]:
        mapping: Dict[int, int] = {}
        out = []
        for g in gates:
            current = g.relabeled(mapping)
            if current.tag == TAG_RELABEL and current.kind is GateKind.SWAP and ANCILLA not in current.qubits:
                a, b = current.qubits
                # Logical content of wire a now lives on wire b and vice versa
                for logical, physical in list(mapping.items()):
                    if physical == a:
                        mapping[logical] = b
                    elif physical == b:
                        mapping[logical] = a
                for wire, other in ((a, b), (b, a)):
                    if wire not in mapping:
                        mapping[wire] = other
                continue
            out.append(current)
        return out

    @staticmethod
    def _drop_terminal_target_gates(gates: List[Gate]) -> List[Gate]:
        last = max((k for k, g in enumerate(gates) if g.is_entangling and ANCILLA in g.qubits), default=-1)
        return gates[:last + 1] + [g for g in gates[last + 1:] if ANCILLA in g.qubits]

    @staticmethod
    def _peephole(gates: List[Gate]) -> List[Gate]:
        out: List[Gate] = []

        def last_touching(qubits, before=None) -> int:
            end = len(out) if before is None else before
            for index in range(end - 1, -1, -1):
                if set(out[index].qubits) & set(qubits):
                    return index
            return -1

        for g in gates:
            j = last_touching(g.qubits)
            if j >= 0 and out[j].is_inverse_of(g) and set(out[j].qubits) == set(g.qubits):
                del out[j]
                continue
            if g.kind is GateKind.H and j >= 0 and out[j].kind is GateKind.CZ:
                wire = g.qubits[0]
                i = last_touching((wire,), before=j)
                if i >= 0 and out[i].kind is GateKind.H and out[i].qubits == g.qubits:
                    control = next(q for q in out[j].qubits if q != wire)
                    out[j] = Gate(GateKind.CNOT, (control, wire), None, out[j].tag)
                    del out[i]
                    continue
            out.append(g)
        return out

    def cnot_table(self, params: ModelParams, tau: float = 0.1) -> List[Dict]:
        """
        CNOT counts of optimized Hadamard-test circuits per ordering and structure

        Entries that differ from the published counts are logged as warnings.
        """
        rows = []
        for ordering in TrotterOrdering:
            evolution = self.trotter_step(ordering, tau, params)
            for structure, (left, right) in CORRELATOR_STRUCTURES.items():
                circuit = self.hadamard_test_circuit(
                    PauliString.from_label(right), PauliString.from_label(left), evolution)
                count = cnot_count(self.optimize(circuit))
                published = PUBLISHED_CNOT_COUNTS[ordering.value][structure]
                if count != published:
                    logger.warning("CNOT count %s %s: %d under this lowering, %d published",
                                   ordering.value, structure, count, published)
                rows.append({
                    "ordering": ordering.value,
                    "structure": structure,
                    "cnot_count": count,
                    "published": published,
                    "match": count == published,
                })
        return rows
