"""
State-vector and density-matrix execution of circuits, plus ancilla sampling.
"""

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Mapping, Optional, Union
import logging
import zlib

import numpy as np

import config
from .circuit_service import ANCILLA, Circuit, Gate, apply_matrix
from .exceptions import ConfigError, DimensionError, InvariantViolation, NormalizationError

logger = logging.getLogger(__name__)

_PAULI_MATRICES = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_PAULI_BY_NAME = {"X": _PAULI_MATRICES[1], "Y": _PAULI_MATRICES[2], "Z": _PAULI_MATRICES[3]}

# Rotations taking the X / Y eigenbasis onto the computational basis
_BASIS_CHANGE = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),
    "Y": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0) @ np.diag([1, -1j]),
    "Z": np.eye(2, dtype=complex),
}


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = amplitudes.shape[0].bit_length() - 1
        if amplitudes.shape[0] != 1 << n:
            raise DimensionError(f"state length {amplitudes.shape[0]} is not a power of two")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > config.NORM_TOLERANCE:
            raise NormalizationError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amplitudes = np.zeros(1 << n_qubits, dtype=complex)
        amplitudes[0] = 1.0
        return cls(amplitudes)

    @classmethod
    def with_ancilla(cls, target: np.ndarray) -> "StateVector":
        """|0>_ancilla (x) |target>; the ancilla is the most significant qubit"""
        return cls(np.kron(np.array([1.0, 0.0]), np.asarray(target, dtype=complex)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)
        _check_density(matrix, config.NORM_TOLERANCE, NormalizationError)

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()))


def _check_density(matrix: np.ndarray, tolerance: float, error=InvariantViolation):
    hermitian_gap = float(np.max(np.abs(matrix - matrix.conj().T)))
    if hermitian_gap > tolerance:
        raise error(f"density matrix not Hermitian (deviation {hermitian_gap:.3e})")
    trace_gap = abs(np.trace(matrix) - 1.0)
    if trace_gap > tolerance:
        raise error(f"density matrix trace deviates from 1 by {trace_gap:.3e}")
    smallest = float(np.linalg.eigvalsh((matrix + matrix.conj().T) / 2.0)[0])
    if smallest < -max(tolerance, 1e-9):
        raise error(f"density matrix has negative eigenvalue {smallest:.3e}")


def confusion_matrix(flip_0_to_1: float, flip_1_to_0: float) -> np.ndarray:
    """Rows are the true bit, columns the reported bit"""
    return np.array([[1.0 - flip_0_to_1, flip_0_to_1], [flip_1_to_0, 1.0 - flip_1_to_0]])


@dataclass(frozen=True, eq=False)
class NoiseModel:
    p1: float = 0.0
    p2: float = 0.0
    readout: np.ndarray = field(default_factory=lambda: np.eye(2))
    # Per-qubit confusion matrices that replace `readout` on those qubits
    readout_overrides: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p1", "p2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        object.__setattr__(self, "readout", self._validated(self.readout))
        object.__setattr__(self, "readout_overrides",
                           {int(q): self._validated(m) for q, m in dict(self.readout_overrides).items()})

    @staticmethod
    def _validated(matrix) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (2, 2):
            raise ConfigError(f"confusion matrix must be 2x2, got {matrix.shape}")
        if np.any(matrix < 0.0) or np.any(matrix > 1.0) or not np.allclose(matrix.sum(axis=1), 1.0):
            raise ConfigError("confusion matrix rows must be probability vectors")
        return matrix

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def depolarizing(cls, p1: float = config.DEFAULT_P1, p2: float = config.DEFAULT_P2,
                     flip_0_to_1: float = config.DEFAULT_READOUT_FLIP,
                     flip_1_to_0: Optional[float] = None) -> "NoiseModel":
        flip_1_to_0 = flip_0_to_1 if flip_1_to_0 is None else flip_1_to_0
        return cls(p1=p1, p2=p2, readout=confusion_matrix(flip_0_to_1, flip_1_to_0))

    def confusion(self, qubit: int = ANCILLA) -> np.ndarray:
        return self.readout_overrides.get(qubit, self.readout)

    @property
    def is_noiseless_evolution(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0


@dataclass(frozen=True)
class ShotRecord:
    shots: int
    counts: Dict[str, int]
    basis: str = "Z"

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError(f"counts {self.counts} do not sum to {self.shots} shots")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([self.counts.get("0", 0), self.counts.get("1", 0)], dtype=float) / self.shots

    @property
    def mean(self) -> float:
        """Raw +1/-1 expectation of the measured Pauli"""
        f0, f1 = self.frequencies
        return float(f0 - f1)

    @property
    def std_error(self) -> float:
        return float(np.sqrt(max(1.0 - self.mean ** 2, 0.0) / self.shots))

    def to_dict(self) -> dict:
        return {"shots": self.shots, "counts": dict(self.counts), "basis": self.basis}


def derive_seed(seed: int, *key: Union[int, str]) -> int:
    """Independent per-task seed derived from the run seed and a task key"""
    words = [int(k) if isinstance(k, (int, np.integer)) else zlib.crc32(str(k).encode()) for k in key]
    return int(np.random.SeedSequence([int(seed), *words]).generate_state(1)[0])


def _depolarizing_terms(k: int):
    for paulis in product(_PAULI_MATRICES, repeat=k):
        matrix = paulis[0]
        for p in paulis[1:]:
            matrix = np.kron(matrix, p)
        yield matrix


_DEPOLARIZING_TERMS = {k: tuple(_depolarizing_terms(k)) for k in (1, 2)}


class NoisySimService:
    def __init__(self, guard: float = config.DENSITY_GUARD):
        """
        Initialize NoisySim service

        Args:
            guard: Tolerance of the post-evolution density-matrix checks
        """
        self.guard = guard

    def run_ideal(self, circuit: Circuit, init: StateVector) -> StateVector:
        """
        Exact gate-by-gate evolution of a pure state

        Args:
            circuit: Circuit to execute
            init: Initial state on circuit.n_qubits qubits

        Returns:
            Final StateVector
        """
        if init.n_qubits != circuit.n_qubits:
            raise DimensionError(f"state has {init.n_qubits} qubits, circuit {circuit.n_qubits}")
        tensor = init.amplitudes.reshape((2,) * circuit.n_qubits)
        for gate in circuit.gates:
            tensor = apply_matrix(tensor, gate.matrix, gate.qubits)
        return StateVector(tensor.reshape(-1))

    def _apply_channel(self, tensor: np.ndarray, gate: Gate, n: int, noise: NoiseModel) -> np.ndarray:
        rows = list(gate.qubits)
        cols = [q + n for q in gate.qubits]
        tensor = apply_matrix(tensor, gate.matrix, rows)
        tensor = apply_matrix(tensor, gate.matrix.conj(), cols)
        p = noise.p2 if gate.is_entangling else noise.p1
        if p == 0.0:
            return tensor
        terms = _DEPOLARIZING_TERMS[len(rows)]
        # (1 - p) rho + p * Tr_S(rho) (x) I/d  written as a uniform Pauli twirl
        mixed = np.zeros_like(tensor)
        for pauli in terms:
            mixed += apply_matrix(apply_matrix(tensor, pauli, rows), pauli.conj(), cols)
        return (1.0 - p) * tensor + (p / len(terms)) * mixed

    def run_noisy(self, circuit: Circuit, init: DensityMatrix, noise: NoiseModel) -> DensityMatrix:
        """
        Density-matrix evolution with depolarizing noise after every gate

        Args:
            circuit: Circuit to execute
            init: Initial density matrix
            noise: Gate and readout noise model

        Returns:
            Final DensityMatrix

        Raises:
            InvariantViolation: If the output drifts from a valid density matrix
        """
        n = circuit.n_qubits
        if init.n_qubits != n:
            raise DimensionError(f"density matrix has {init.n_qubits} qubits, circuit {n}")
        tensor = init.matrix.reshape((2,) * (2 * n))
        for gate in circuit.gates:
            tensor = self._apply_channel(tensor, gate, n, noise)
        matrix = tensor.reshape(1 << n, 1 << n)
        _check_density(matrix, self.guard)
        logger.debug("noisy run: %d gates, p1=%g, p2=%g", len(circuit), noise.p1, noise.p2)
        return DensityMatrix((matrix + matrix.conj().T) / 2.0)

    @staticmethod
    def reduced_density(state: Union[StateVector, DensityMatrix], qubit: int = ANCILLA) -> np.ndarray:
        """Single-qubit marginal by partial trace"""
        if isinstance(state, StateVector):
            n = state.n_qubits
            tensor = np.moveaxis(state.amplitudes.reshape((2,) * n), qubit, 0).reshape(2, -1)
            return tensor @ tensor.conj().T
        n = state.n_qubits
        tensor = state.matrix.reshape((2,) * (2 * n))
        tensor = np.moveaxis(tensor, (qubit, qubit + n), (0, 1)).reshape(2, 2, 1 << (n - 1), 1 << (n - 1))
        return np.trace(tensor, axis1=2, axis2=3)

    def ancilla_expectation(self, state: Union[StateVector, DensityMatrix], basis: str, qubit: int = ANCILLA) -> float:
        """Infinite-shot <X>, <Y> or <Z> of one qubit"""
        rho = self.reduced_density(state, qubit)
        return float(np.real(np.trace(_PAULI_BY_NAME[basis.upper()] @ rho)))

    def outcome_probabilities(self, state: Union[StateVector, DensityMatrix], basis: str,
                              noise: NoiseModel, qubit: int = ANCILLA) -> np.ndarray:
        """Reported-bit probabilities after the basis change and readout confusion"""
        change = _BASIS_CHANGE[basis.upper()]
        rho = change @ self.reduced_density(state, qubit) @ change.conj().T
        true_probabilities = np.clip(np.real(np.diag(rho)), 0.0, 1.0)
        true_probabilities /= true_probabilities.sum()
        return true_probabilities @ noise.confusion(qubit)

    def sample_ancilla(self, state: Union[StateVector, DensityMatrix], basis: str, shots: int,
                       noise: NoiseModel, seed: int, qubit: int = ANCILLA) -> ShotRecord:
        """
        Draw measurement outcomes of one qubit in the X, Y or Z basis

        Args:
            state: Final state of the circuit
            basis: Measurement basis
            shots: Number of repetitions M
            noise: Source of the readout confusion matrix
            seed: Seed of the pseudo-random stream

        Returns:
            ShotRecord with counts for '0' and '1'
        """
        if shots < 1:
            raise ValueError("shots must be >= 1")
        probabilities = self.outcome_probabilities(state, basis, noise, qubit)
        rng = np.random.default_rng(seed)
        zeros = int(rng.binomial(shots, min(max(probabilities[0], 0.0), 1.0)))
        return ShotRecord(shots=shots, counts={"0": zeros, "1": shots - zeros}, basis=basis.upper())
