from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

import config
from .pauli_service import PauliString, QubitOperator, to_matrix

logger = logging.getLogger(__name__)

N_QUBITS = config.N_TARGET_QUBITS
LATTICE_SIDE = 2
N_SITES = LATTICE_SIDE * LATTICE_SIDE


class ModelParams(BaseModel):
    """Couplings of the two-flavor Hubbard model on the 2x2 periodic lattice"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    t: float = config.DEFAULT_T
    U: float = config.DEFAULT_U
    V: float = config.DEFAULT_V
    e_A: float = config.DEFAULT_CHARGE_A
    e_B: float = config.DEFAULT_CHARGE_B
    # Coefficient of the ZZZ sum in the qubit Hamiltonian; None means -U/4
    zzz_coefficient: Optional[float] = None

    @field_validator("t", "U", "V", "e_A", "e_B", "zzz_coefficient")
    @classmethod
    def _finite(cls, value):
        if value is not None and not math.isfinite(value):
            raise ValueError("model parameters must be finite")
        return value

    @property
    def three_body_coefficient(self) -> float:
        return -self.U / 4.0 if self.zzz_coefficient is None else self.zzz_coefficient


class MomentumVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int
    n: int

    @field_validator("m", "n")
    @classmethod
    def _binary(cls, value):
        if value not in (0, 1):
            raise ValueError("momentum components must be 0 or 1 on the 2x2 lattice")
        return value

    @classmethod
    def parse(cls, text: str) -> "MomentumVector":
        digits = text.strip().strip("()").replace(",", "").replace(" ", "")
        if len(digits) != 2:
            raise ValueError(f"momentum must look like '01' or '(0,1)', got {text!r}")
        return cls(m=int(digits[0]), n=int(digits[1]))

    @property
    def tag(self) -> str:
        return f"{self.m}{self.n}"


@dataclass(frozen=True)
class CorrelatorTerm:
    weight: float
    left: PauliString
    right: PauliString


@dataclass(frozen=True)
class HamiltonianParts:
    constant: float
    one_body: QubitOperator
    two_body: QubitOperator
    three_body: QubitOperator


def _z_string(*qubits: int) -> PauliString:
    """Z string on the given 1-based target qubits"""
    return PauliString.from_sparse(N_QUBITS, {q - 1: "Z" for q in qubits})


def _x_string(qubit: int) -> PauliString:
    return PauliString.from_sparse(N_QUBITS, {qubit - 1: "X"})


# Qubit pairs per flavor: T1T2 store the site of particle A, T3T4 of particle B
_EXCITATION_SUPPORT = {
    (0, 1): ((1,), (3,)),
    (1, 0): ((2,), (4,)),
    (1, 1): ((1, 2), (3, 4)),
}

TWO_BODY_PAIRS = ((1, 4), (2, 3))


class ModelService:
    def __init__(self):
        """
        Initialize Model service

        Builds qubit and first-quantized Hamiltonians for ModelParams passed per call.
        """
        self._cache: "OrderedDict[ModelParams, HamiltonianParts]" = OrderedDict()

    def hamiltonian_parts(self, params: ModelParams) -> HamiltonianParts:
        """
        Split H into constant, one-, two- and three-body pieces

        Args:
            params: Model couplings

        Returns:
            HamiltonianParts whose sum is the full qubit Hamiltonian
        """
        if params in self._cache:
            self._cache.move_to_end(params)
            return self._cache[params]
        one_body = QubitOperator.from_pairs(
            N_QUBITS, [(-2.0 * params.t, _x_string(k)) for k in range(1, N_QUBITS + 1)]
        )
        two_body = QubitOperator.from_pairs(
            N_QUBITS, [(-params.U / 4.0, _z_string(i, j)) for i, j in TWO_BODY_PAIRS]
        )
        triples = [(i, j, k) for i in range(1, 5) for j in range(i + 1, 5) for k in range(j + 1, 5)]
        three_body = QubitOperator.from_pairs(
            N_QUBITS, [(params.three_body_coefficient, _z_string(*triple)) for triple in triples]
        )
        parts = HamiltonianParts(
            constant=8.0 * params.t + params.U / 2.0,
            one_body=one_body,
            two_body=two_body,
            three_body=three_body,
        )
        self._cache[params] = parts
        if len(self._cache) > config.CACHE_SIZE:
            self._cache.popitem(last=False)
        return parts

    def build_qubit_hamiltonian(self, params: ModelParams) -> QubitOperator:
        parts = self.hamiltonian_parts(params)
        return (
            QubitOperator.identity(N_QUBITS, parts.constant)
            + parts.one_body + parts.two_body + parts.three_body
        )

    def two_site_block(self, params: ModelParams, i: int, j: int) -> QubitOperator:
        """H_B^(i,j) = -2t(X_i + X_j) - (U/4) Z_i Z_j for 1-based targets i, j"""
        return QubitOperator.from_pairs(N_QUBITS, [
            (-2.0 * params.t, _x_string(i)),
            (-2.0 * params.t, _x_string(j)),
            (-params.U / 4.0, _z_string(i, j)),
        ])

    def build_excitation(self, q: MomentumVector, params: ModelParams) -> QubitOperator:
        """
        Density excitation rho(q) mapped to qubits

        Args:
            q: Momentum transfer on the reciprocal lattice
            params: Model parameters holding the species charges

        Returns:
            Hermitian QubitOperator
        """
        if (q.m, q.n) == (0, 0):
            return QubitOperator.identity(N_QUBITS, params.e_A + params.e_B)
        support_a, support_b = _EXCITATION_SUPPORT[(q.m, q.n)]
        return QubitOperator.from_pairs(N_QUBITS, [
            (params.e_A, _z_string(*support_a)),
            (params.e_B, _z_string(*support_b)),
        ])

    def correlator_terms(self, q: MomentumVector, params: ModelParams) -> List[CorrelatorTerm]:
        """
        Expand C(tau, q) into weighted Pauli pairs

        Args:
            q: Momentum transfer
            params: Model parameters

        Returns:
            All L^2 ordered (left, right) pairs with weight alpha_left * alpha_right
        """
        terms = self.build_excitation(q, params).sorted_terms()
        return [
            CorrelatorTerm(weight=float((a_left * a_right).real), left=left, right=right)
            for left, a_left in terms
            for right, a_right in terms
        ]

    def build_fermionic_reference(self, params: ModelParams) -> np.ndarray:
        """
        Two distinguishable particles (flavors A, B) on the 2x2 periodic lattice

        Basis states are (site_A, site_B) pairs ordered lexicographically, with
        sites numbered 1..4 in binary order of their (x, y) coordinates.

        Args:
            params: Model couplings

        Returns:
            16 x 16 real symmetric matrix
        """
        hopping = self._single_particle_hopping(params.t)
        identity = np.eye(N_SITES)
        hamiltonian = np.kron(hopping, identity) + np.kron(identity, hopping)

        static_site = 0
        for site_a in range(N_SITES):
            for site_b in range(N_SITES):
                index = site_a * N_SITES + site_b
                energy = 0.0
                if site_a == site_b:
                    energy += params.U
                # Static particle on site 1: one-body U per flavor, two-body V
                energy += params.U * ((site_a == static_site) + (site_b == static_site))
                if site_a == static_site and site_b == static_site:
                    energy += params.V
                hamiltonian[index, index] += energy
        return hamiltonian

    @staticmethod
    def _single_particle_hopping(t: float) -> np.ndarray:
        """Lattice kinetic term 2*d*t on site, -t per nearest-neighbor link (periodic wrap)"""
        dimension = 2
        matrix = np.zeros((N_SITES, N_SITES))
        for site in range(N_SITES):
            x, y = divmod(site, LATTICE_SIDE)
            matrix[site, site] += 2 * dimension * t
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                neighbor = ((x + dx) % LATTICE_SIDE) * LATTICE_SIDE + (y + dy) % LATTICE_SIDE
                matrix[site, neighbor] -= t
        return matrix

    def compare_spectra(self, params: ModelParams) -> Tuple[float, float]:
        """
        Compare the fermionic reference with the qubit Hamiltonian

        Returns:
            (additive constant, max residual) where the constant is the mean
            shift between the two sorted spectra
        """
        reference = np.linalg.eigvalsh(self.build_fermionic_reference(params))
        mapped = np.linalg.eigvalsh(to_matrix(self.build_qubit_hamiltonian(params)))
        shift = float(np.mean(mapped - reference))
        residual = float(np.max(np.abs(mapped - reference - shift)))
        logger.info("spectrum comparison: constant %.6g, residual %.3e", shift, residual)
        return shift, residual


class TrotterOrdering(str, Enum):
    """First-order splittings of e^{-iH tau}; factors listed as an operator product"""

    A1 = "A1"  # e^{-i H1} e^{-i (H2 + H3)}
    A2 = "A2"  # e^{-i (H2 + H3)} e^{-i H1}
    B1 = "B1"  # e^{-i HB14} e^{-i HB23} e^{-i H3}
    B2 = "B2"  # e^{-i H3} e^{-i HB14} e^{-i HB23}

    @property
    def is_block_type(self) -> bool:
        return self in (TrotterOrdering.B1, TrotterOrdering.B2)


def ordering_factors(service: ModelService, params: ModelParams, ordering: TrotterOrdering) -> List[QubitOperator]:
    """
    Exponent generators of one Trotter step in time order (first applied first)

    Args:
        service: Model service providing the Hamiltonian pieces
        params: Model couplings
        ordering: Trotter ordering

    Returns:
        List of operators G_k such that the step is ... e^{-i G_2 tau} e^{-i G_1 tau}
    """
    parts = service.hamiltonian_parts(params)
    diagonal = parts.two_body + parts.three_body
    block_14 = service.two_site_block(params, 1, 4)
    block_23 = service.two_site_block(params, 2, 3)
    if ordering is TrotterOrdering.A1:
        return [diagonal, parts.one_body]
    if ordering is TrotterOrdering.A2:
        return [parts.one_body, diagonal]
    if ordering is TrotterOrdering.B1:
        return [parts.three_body, block_23, block_14]
    return [block_23, block_14, parts.three_body]
