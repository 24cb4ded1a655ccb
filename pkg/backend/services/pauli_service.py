"""
Pauli-string algebra on a symplectic bit encoding.

Qubit k of a string corresponds to bit k of ``x_mask``/``z_mask`` and to
character k of its label. Dense lowering is big-endian: qubit 0 is the most
significant tensor factor, so label "ZI" lowers to Z (x) I.
"""

from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, Mapping, Optional, Tuple, Union
import logging

import numpy as np

import config
from .exceptions import DimensionError, NormalizationError

logger = logging.getLogger(__name__)

_LABEL_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LABEL = {bits: label for label, bits in _LABEL_BITS.items()}
_PHASES = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


def _phase_exponent(x1: int, z1: int, x2: int, z2: int) -> int:
    """Power of i produced by the single-qubit product sigma(x1,z1)·sigma(x2,z2)"""
    if x1 == 0 and z1 == 0:
        return 0
    if x1 == 1 and z1 == 1:
        return z2 - x2
    if x1 == 1:
        return z2 * (2 * x2 - 1)
    return x2 * (1 - 2 * z2)


@dataclass(frozen=True)
class PauliString:
    n_qubits: int
    x_mask: int = 0
    z_mask: int = 0
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise DimensionError("PauliString needs at least one qubit")
        limit = 1 << self.n_qubits
        if not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise DimensionError(f"masks do not fit in {self.n_qubits} qubits")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x_mask = z_mask = 0
        for k, char in enumerate(label.strip().upper()):
            if char not in _LABEL_BITS:
                raise ValueError(f"invalid Pauli label character {char!r} in {label!r}")
            x_bit, z_bit = _LABEL_BITS[char]
            x_mask |= x_bit << k
            z_mask |= z_bit << k
        return cls(len(label.strip()), x_mask, z_mask)

    @classmethod
    def from_sparse(cls, n_qubits: int, factors: Mapping[int, str]) -> "PauliString":
        """Build a string from {qubit: 'X'|'Y'|'Z'} (0-based qubit indices)"""
        chars = ["I"] * n_qubits
        for qubit, char in factors.items():
            chars[qubit] = char
        return cls.from_label("".join(chars))

    @property
    def phase(self) -> complex:
        return _PHASES[self.phase_exp]

    @property
    def label(self) -> str:
        return "".join(
            _BITS_LABEL[((self.x_mask >> k) & 1, (self.z_mask >> k) & 1)]
            for k in range(self.n_qubits)
        )

    @property
    def support(self) -> Tuple[int, ...]:
        mask = self.x_mask | self.z_mask
        return tuple(k for k in range(self.n_qubits) if (mask >> k) & 1)

    @property
    def weight(self) -> int:
        return len(self.support)

    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    def factor(self, qubit: int) -> str:
        return _BITS_LABEL[((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1)]

    def unsigned(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_mask, self.z_mask)

    def commutes(self, other: "PauliString") -> bool:
        _check_sizes(self, other)
        overlap = bin(self.x_mask & other.z_mask).count("1") + bin(self.z_mask & other.x_mask).count("1")
        return overlap % 2 == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __str__(self) -> str:
        prefix = {0: "", 1: "i", 2: "-", 3: "-i"}[self.phase_exp]
        return f"{prefix}{self.label}"


def _check_sizes(a: PauliString, b: PauliString):
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"qubit count mismatch: {a.n_qubits} vs {b.n_qubits}")


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """
    Product of two Pauli strings with exact phase bookkeeping

    Args:
        a: Left factor
        b: Right factor

    Returns:
        PauliString c with matrix(c) = matrix(a)·matrix(b)
    """
    _check_sizes(a, b)
    exponent = a.phase_exp + b.phase_exp
    for k in range(a.n_qubits):
        exponent += _phase_exponent(
            (a.x_mask >> k) & 1, (a.z_mask >> k) & 1,
            (b.x_mask >> k) & 1, (b.z_mask >> k) & 1,
        )
    return PauliString(a.n_qubits, a.x_mask ^ b.x_mask, a.z_mask ^ b.z_mask, exponent % 4)


def commutes(a: PauliString, b: PauliString) -> bool:
    return a.commutes(b)


def _basis_masks(pauli: PauliString) -> Tuple[int, int, int]:
    """Return (flip mask, sign mask, number of Y factors) in big-endian basis-index bits"""
    n = pauli.n_qubits
    flip = sign = 0
    n_y = 0
    for k in range(n):
        x_bit = (pauli.x_mask >> k) & 1
        z_bit = (pauli.z_mask >> k) & 1
        position = n - 1 - k
        flip |= x_bit << position
        sign |= z_bit << position
        n_y += x_bit & z_bit
    return flip, sign, n_y


def _sign_vector(indices: np.ndarray, sign_mask: int, n_qubits: int) -> np.ndarray:
    signs = np.ones(indices.shape[0])
    for position in range(n_qubits):
        if (sign_mask >> position) & 1:
            signs *= 1 - 2 * ((indices >> position) & 1)
    return signs


def apply_pauli(pauli: PauliString, vector: np.ndarray, coefficient: complex = 1.0) -> np.ndarray:
    """Return coefficient · P |vector> without building the dense matrix"""
    dim = 1 << pauli.n_qubits
    vector = np.asarray(vector, dtype=complex)
    if vector.shape[0] != dim:
        raise DimensionError(f"vector length {vector.shape[0]} does not match {pauli.n_qubits} qubits")
    flip, sign_mask, n_y = _basis_masks(pauli)
    indices = np.arange(dim)
    factor = coefficient * pauli.phase * (1j ** n_y)
    # Y = iXZ: the Z part acts first on |b>, then X flips b
    out = np.zeros_like(vector)
    out[indices ^ flip] = factor * _sign_vector(indices, sign_mask, pauli.n_qubits) * vector
    return out


def pauli_matrix(pauli: PauliString) -> np.ndarray:
    dim = 1 << pauli.n_qubits
    flip, sign_mask, n_y = _basis_masks(pauli)
    indices = np.arange(dim)
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[indices ^ flip, indices] = pauli.phase * (1j ** n_y) * _sign_vector(indices, sign_mask, pauli.n_qubits)
    return matrix


class QubitOperator:
    """Weighted sum of Pauli strings; phases are folded into the coefficients"""

    def __init__(self, n_qubits: int, terms: Optional[Mapping[PauliString, complex]] = None):
        self.n_qubits = n_qubits
        accumulated: Dict[PauliString, complex] = {}
        for pauli, coefficient in (terms or {}).items():
            if pauli.n_qubits != n_qubits:
                raise DimensionError(f"term {pauli} does not act on {n_qubits} qubits")
            key = pauli.unsigned()
            accumulated[key] = accumulated.get(key, 0j) + complex(coefficient) * pauli.phase
        self._terms = MappingProxyType({
            pauli: value for pauli, value in accumulated.items()
            if abs(value) >= config.PRUNE_TOLERANCE
        })

    @classmethod
    def identity(cls, n_qubits: int, coefficient: complex = 1.0) -> "QubitOperator":
        return cls(n_qubits, {PauliString.identity(n_qubits): coefficient})

    @classmethod
    def from_label(cls, label: str, coefficient: complex = 1.0) -> "QubitOperator":
        pauli = PauliString.from_label(label)
        return cls(pauli.n_qubits, {pauli: coefficient})

    @classmethod
    def from_pairs(cls, n_qubits: int, pairs: Iterable[Tuple[complex, PauliString]]) -> "QubitOperator":
        terms: Dict[PauliString, complex] = {}
        for coefficient, pauli in pairs:
            key = pauli.unsigned()
            terms[key] = terms.get(key, 0j) + complex(coefficient) * pauli.phase
        return cls(n_qubits, terms)

    @property
    def terms(self) -> Mapping[PauliString, complex]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[Tuple[PauliString, complex]]:
        return iter(self._terms.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QubitOperator):
            return NotImplemented
        return self.n_qubits == other.n_qubits and (self - other).is_zero()

    def __hash__(self):
        # equal operators carry the same surviving strings, whatever their rounding
        return hash((self.n_qubits, frozenset(self._terms)))

    def is_zero(self) -> bool:
        return len(self._terms) == 0

    def simplify(self, tolerance: float = config.HERMITIAN_TOLERANCE) -> "QubitOperator":
        """Drop strings whose coefficient magnitude is below tolerance and round off tiny imaginary parts"""
        terms = {}
        for pauli, value in self:
            if abs(value) < tolerance:
                continue
            if abs(value.imag) < tolerance:
                value = complex(value.real, 0.0)
            terms[pauli] = value
        return QubitOperator(self.n_qubits, terms)

    def coefficient(self, pauli: Union[PauliString, str]) -> complex:
        if isinstance(pauli, str):
            pauli = PauliString.from_label(pauli)
        return self._terms.get(pauli.unsigned(), 0j) * pauli.phase.conjugate()

    def __add__(self, other: "QubitOperator") -> "QubitOperator":
        if not isinstance(other, QubitOperator):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise DimensionError("cannot add operators on different qubit counts")
        merged = dict(self._terms)
        for pauli, value in other:
            merged[pauli] = merged.get(pauli, 0j) + value
        return QubitOperator(self.n_qubits, merged)

    def __neg__(self) -> "QubitOperator":
        return self * -1.0

    def __sub__(self, other: "QubitOperator") -> "QubitOperator":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, QubitOperator):
            if other.n_qubits != self.n_qubits:
                raise DimensionError("cannot multiply operators on different qubit counts")
            products = []
            for left, a in self:
                for right, b in other:
                    products.append((a * b, multiply(left, right)))
            return QubitOperator.from_pairs(self.n_qubits, products)
        if isinstance(other, (int, float, complex, np.number)):
            return QubitOperator(self.n_qubits, {p: v * other for p, v in self})
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    def dagger(self) -> "QubitOperator":
        return QubitOperator(self.n_qubits, {p: np.conj(v) for p, v in self})

    def is_hermitian(self, tolerance: float = config.HERMITIAN_TOLERANCE) -> bool:
        return all(abs(value.imag) <= tolerance for value in self._terms.values())

    def relabel(self, permutation: Mapping[int, int]) -> "QubitOperator":
        """Move the factor on qubit k to qubit permutation[k] (0-based)"""
        terms = {}
        for pauli, value in self:
            factors = {permutation.get(k, k): pauli.factor(k) for k in pauli.support}
            terms[PauliString.from_sparse(self.n_qubits, factors)] = value
        return QubitOperator(self.n_qubits, terms)

    def sorted_terms(self):
        return sorted(self._terms.items(), key=lambda item: item[0].label)

    def __repr__(self) -> str:
        body = " + ".join(f"({value:.6g}) {pauli.label}" for pauli, value in self.sorted_terms())
        return f"QubitOperator({body or '0'})"


def to_matrix(op: Union[QubitOperator, PauliString]) -> np.ndarray:
    """
    Lower an operator to a dense complex matrix

    Args:
        op: QubitOperator or single PauliString

    Returns:
        2^n x 2^n complex matrix
    """
    if isinstance(op, PauliString):
        op = QubitOperator(op.n_qubits, {op: 1.0})
    if op.n_qubits > config.MAX_OPERATOR_QUBITS:
        raise DimensionError(f"dense lowering limited to {config.MAX_OPERATOR_QUBITS} qubits, got {op.n_qubits}")
    dim = 1 << op.n_qubits
    matrix = np.zeros((dim, dim), dtype=complex)
    for pauli, value in op:
        matrix += value * pauli_matrix(pauli)
    return matrix


def apply_operator(op: QubitOperator, vector: np.ndarray) -> np.ndarray:
    out = np.zeros(1 << op.n_qubits, dtype=complex)
    for pauli, value in op:
        out += apply_pauli(pauli, vector, value)
    return out


def expectation(state, op: QubitOperator) -> complex:
    """
    Expectation value <psi|Op|psi>

    Args:
        state: StateVector or 1-D amplitude array
        op: Operator acting on the same number of qubits

    Returns:
        Complex expectation value
    """
    amplitudes = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    if amplitudes.shape[0] != 1 << op.n_qubits:
        raise DimensionError(f"state of length {amplitudes.shape[0]} does not match {op.n_qubits} qubits")
    norm = np.linalg.norm(amplitudes)
    if abs(norm - 1.0) > config.NORM_TOLERANCE:
        raise NormalizationError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
    return complex(np.vdot(amplitudes, apply_operator(op, amplitudes)))


def parse_operator(text: str) -> QubitOperator:
    """
    Parse the line format ``coeff_re coeff_im LABEL``

    Blank lines and lines starting with '#' are ignored.
    """
    pairs = []
    n_qubits = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().replace("−", "-")
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {number}: expected 'coeff_re coeff_im LABEL', got {raw!r}")
        pauli = PauliString.from_label(fields[2])
        if n_qubits is None:
            n_qubits = pauli.n_qubits
        elif pauli.n_qubits != n_qubits:
            raise DimensionError(f"line {number}: label length {pauli.n_qubits} differs from {n_qubits}")
        pairs.append((complex(float(fields[0]), float(fields[1])), pauli))
    if n_qubits is None:
        raise ValueError("operator text contains no terms")
    return QubitOperator.from_pairs(n_qubits, pairs)


def format_operator(op: QubitOperator) -> str:
    lines = [f"{value.real:.17g} {value.imag:.17g} {pauli.label}" for pauli, value in op.sorted_terms()]
    return "\n".join(lines) + "\n"
