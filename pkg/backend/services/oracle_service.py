"""
Exact reference quantities computed in the eigenbasis of H.

Every real-time quantity goes through a single diagonalization; dense matrix
exponentials are only used for the product-formula (Trotter) oracle.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np
from scipy import linalg

import config
from .exceptions import DimensionError, NonHermitianError, NormalizationError
from .model_service import ModelParams, ModelService, TrotterOrdering, ordering_factors
from .pauli_service import QubitOperator, to_matrix

logger = logging.getLogger(__name__)

OperatorLike = Union[QubitOperator, np.ndarray]


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_state(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def dim(self) -> int:
        return self.energies.shape[0]


@dataclass(frozen=True)
class ContaminatedState:
    coefficients: np.ndarray
    fidelity: float

    def vector(self, eigs: EigenSystem) -> np.ndarray:
        return eigs.vectors @ self.coefficients


@dataclass(frozen=True)
class SpectralLine:
    omega: float
    weight: complex


def as_matrix(op: OperatorLike) -> np.ndarray:
    if isinstance(op, QubitOperator):
        return to_matrix(op)
    return np.asarray(op, dtype=complex)


def state_array(state) -> np.ndarray:
    return np.asarray(getattr(state, "amplitudes", state), dtype=complex)


class OracleService:
    def __init__(self, model_service: ModelService):
        """
        Initialize Oracle service

        Args:
            model_service: Service for Hamiltonian construction (used by the Trotter oracle)
        """
        self.model_service = model_service
        self._eigen_cache: "OrderedDict[QubitOperator, EigenSystem]" = OrderedDict()

    def diagonalize(self, hamiltonian: OperatorLike) -> EigenSystem:
        """
        Full eigendecomposition of a Hermitian operator

        Args:
            hamiltonian: QubitOperator or dense matrix

        Returns:
            EigenSystem with ascending energies
        """
        if isinstance(hamiltonian, QubitOperator) and hamiltonian in self._eigen_cache:
            self._eigen_cache.move_to_end(hamiltonian)
            return self._eigen_cache[hamiltonian]
        matrix = as_matrix(hamiltonian)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {matrix.shape}")
        if matrix.shape[0] > config.MAX_DIAGONALIZE_DIM:
            raise DimensionError(f"dimension {matrix.shape[0]} exceeds {config.MAX_DIAGONALIZE_DIM}")
        asymmetry = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
        if asymmetry > config.HERMITIAN_TOLERANCE:
            raise NonHermitianError(f"matrix is not Hermitian (max asymmetry {asymmetry:.3e})")
        energies, vectors = linalg.eigh(matrix)
        eigs = EigenSystem(energies=energies, vectors=vectors)
        if isinstance(hamiltonian, QubitOperator):
            self._eigen_cache[hamiltonian] = eigs
            if len(self._eigen_cache) > config.CACHE_SIZE:
                self._eigen_cache.popitem(last=False)
        logger.debug("diagonalized %d-dim operator, E0=%.8g", eigs.dim, eigs.ground_energy)
        return eigs

    def _resolve(self, hamiltonian) -> EigenSystem:
        if isinstance(hamiltonian, EigenSystem):
            return hamiltonian
        return self.diagonalize(hamiltonian)

    def prepare(self, hamiltonian, excitation: OperatorLike, state):
        eigs = self._resolve(hamiltonian)
        psi = state_array(state)
        if psi.shape[0] != eigs.dim:
            raise DimensionError(f"state length {psi.shape[0]} does not match dimension {eigs.dim}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > config.NORM_TOLERANCE:
            raise NormalizationError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        a_matrix = as_matrix(excitation)
        if a_matrix.shape != (eigs.dim, eigs.dim):
            raise DimensionError("excitation operator does not match the Hamiltonian dimension")
        psi_eigen = eigs.vectors.conj().T @ psi
        a_eigen = eigs.vectors.conj().T @ a_matrix @ eigs.vectors
        return eigs, psi_eigen, a_eigen

    def exact_correlator(self, hamiltonian, excitation: OperatorLike, state, tau: Union[float, Sequence[float]]):
        """
        C(tau) = <psi| e^{iH tau} H_I e^{-iH tau} H_I |psi>

        Args:
            hamiltonian: QubitOperator, dense matrix or EigenSystem
            excitation: Excitation operator H_I
            state: Normalized state vector
            tau: Single time or array of times

        Returns:
            Complex value (or array for array input)
        """
        eigs, psi_eigen, a_eigen = self.prepare(hamiltonian, excitation, state)
        u = a_eigen @ psi_eigen
        taus = np.atleast_1d(np.asarray(tau, dtype=float))
        values = np.empty(taus.shape[0], dtype=complex)
        for index, time in enumerate(taus):
            phases = np.exp(1j * eigs.energies * time)
            values[index] = (psi_eigen.conj() * phases) @ a_eigen @ (u * phases.conj())
        return complex(values[0]) if np.ndim(tau) == 0 else values

    def is_eigenstate(self, hamiltonian, state, tolerance: float = 1e-10) -> bool:
        eigs = self._resolve(hamiltonian)
        weights = np.abs(eigs.vectors.conj().T @ state_array(state)) ** 2
        mean = float(weights @ eigs.energies)
        variance = float(weights @ (eigs.energies - mean) ** 2)
        return variance < tolerance

    def spectral_response(self, hamiltonian, excitation: OperatorLike, state) -> List[SpectralLine]:
        """
        Line spectrum of the response

        For an eigenstate the lines sit at E_n - E_psi with weights
        |<psi|H_I|n>|^2. Otherwise the full double sum is returned: one line per
        pair (m, n) at E_n - E_m with complex weight conj(c_m) A_mn (A psi)_n.

        Args:
            hamiltonian: QubitOperator, dense matrix or EigenSystem
            excitation: Excitation operator H_I
            state: Normalized state

        Returns:
            List of SpectralLine
        """
        eigs, psi_eigen, a_eigen = self.prepare(hamiltonian, excitation, state)
        u = a_eigen @ psi_eigen
        if self.is_eigenstate(eigs, state):
            reference = float(np.abs(psi_eigen) ** 2 @ eigs.energies)
            return [
                SpectralLine(omega=float(energy - reference), weight=complex(abs(amplitude) ** 2))
                for energy, amplitude in zip(eigs.energies, u)
            ]
        lines = []
        for m in range(eigs.dim):
            if abs(psi_eigen[m]) < config.PRUNE_TOLERANCE:
                continue
            for n in range(eigs.dim):
                weight = psi_eigen[m].conj() * a_eigen[m, n] * u[n]
                if abs(weight) >= config.PRUNE_TOLERANCE:
                    lines.append(SpectralLine(omega=float(eigs.energies[n] - eigs.energies[m]), weight=complex(weight)))
        return lines

    def sum_rule(self, hamiltonian, excitation: OperatorLike, state, m: int, shifted: bool = False) -> float:
        """
        Energy moment <psi| H_I H^m H_I |psi>

        Args:
            m: Moment order (>= 0)
            shifted: Use (H - <H>_psi)^m so eigenstate moments equal sum_n w_n omega_n^m

        Returns:
            Real moment
        """
        if m < 0:
            raise ValueError(f"sum rule order must be non-negative, got {m}")
        eigs, psi_eigen, a_eigen = self.prepare(hamiltonian, excitation, state)
        u = a_eigen @ psi_eigen
        energies = eigs.energies
        if shifted:
            energies = energies - float(np.abs(psi_eigen) ** 2 @ eigs.energies)
        return float(np.real(np.abs(u) ** 2 @ energies ** m))

    def moment_series(self, hamiltonian, excitation: OperatorLike, state, tau: float, order: int) -> complex:
        """Taylor expansion of C(tau) around 0 built from shifted sum rules (eigenstate input)"""
        total = 0j
        factorial = 1.0
        for m in range(order + 1):
            if m > 0:
                factorial *= m
            total += (-1j * tau) ** m / factorial * self.sum_rule(hamiltonian, excitation, state, m, shifted=True)
        return total

    def euclidean_correlator(self, hamiltonian, excitation: OperatorLike, state, tau_e: float) -> complex:
        """
        C_E(tau_E) = <psi| e^{-H tau_E} H_I e^{-H tau_E} H_I |psi>

        Real for eigenstate input; contaminated states with complex coefficients
        give a complex value.
        """
        if tau_e < 0:
            raise ValueError(f"imaginary time must be non-negative, got {tau_e}")
        eigs, psi_eigen, a_eigen = self.prepare(hamiltonian, excitation, state)
        damping = np.exp(-eigs.energies * tau_e)
        return complex((psi_eigen.conj() * damping) @ a_eigen @ (damping * (a_eigen @ psi_eigen)))

    def leading_euclidean_coefficient(self, eigs: EigenSystem, excitation: OperatorLike, state) -> complex:
        """Coefficient of e^{-2 E_0 tau_E} in the Euclidean correlator of ``state``"""
        _, psi_eigen, a_eigen = self.prepare(eigs, excitation, state)
        ground = np.abs(eigs.energies - eigs.ground_energy) < 1e-9
        restricted = (psi_eigen.conj() * ground) @ a_eigen
        return complex((restricted * ground) @ (a_eigen @ psi_eigen))

    def make_contaminated_state(self, eigs: EigenSystem, target_fidelity: float, seed: int) -> ContaminatedState:
        """
        State with |<Psi_0|Psi>|^2 = target_fidelity and seeded excited-state admixture

        Args:
            eigs: Eigensystem whose first vector is the ground state
            target_fidelity: Fidelity F in (0, 1]
            seed: Seed for the excited-state profile

        Returns:
            ContaminatedState in eigenbasis coordinates
        """
        if not 0.0 < target_fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in (0, 1], got {target_fidelity}")
        coefficients = np.zeros(eigs.dim, dtype=complex)
        coefficients[0] = np.sqrt(target_fidelity)
        remainder = 1.0 - target_fidelity
        if remainder > 0 and eigs.dim > 1:
            rng = np.random.default_rng(seed)
            magnitudes = rng.uniform(0.0, 1.0, eigs.dim - 1)
            phases = rng.uniform(0.0, 2 * np.pi, eigs.dim - 1)
            excited = magnitudes * np.exp(1j * phases)
            excited *= np.sqrt(remainder) / np.linalg.norm(excited)
            coefficients[1:] = excited
        return ContaminatedState(coefficients=coefficients, fidelity=float(abs(coefficients[0]) ** 2))

    def single_contamination(self, eigs: EigenSystem, level: int, amplitude: float) -> ContaminatedState:
        """Ground state with a single excited component c_level = amplitude"""
        if not 0 < level < eigs.dim:
            raise ValueError(f"level must select an excited state, got {level}")
        if not 0.0 <= amplitude < 1.0:
            raise ValueError(f"amplitude must lie in [0, 1), got {amplitude}")
        coefficients = np.zeros(eigs.dim, dtype=complex)
        coefficients[0] = np.sqrt(1.0 - amplitude ** 2)
        coefficients[level] = amplitude
        return ContaminatedState(coefficients=coefficients, fidelity=float(1.0 - amplitude ** 2))

    def contamination_scan(self, eigs: EigenSystem, excitation: OperatorLike, amplitudes: Sequence[float],
                           level: Optional[int] = None) -> List[Dict[str, float]]:
        """
        Deviation of the leading Euclidean coefficient against contamination size

        Args:
            eigs: Eigensystem of H
            excitation: Excitation operator
            amplitudes: Contamination amplitudes c_m to scan
            level: Excited level to contaminate (default: the one with the largest |<0|H_I|m>|)

        Returns:
            Rows with amplitude, leading coefficient and deviation from the exact one
        """
        a_eigen = eigs.vectors.conj().T @ as_matrix(excitation) @ eigs.vectors
        if level is None:
            level = int(np.argmax(np.abs(a_eigen[0, 1:]))) + 1
        exact = self.leading_euclidean_coefficient(eigs, excitation, eigs.ground_state)
        rows = []
        for amplitude in amplitudes:
            state = self.single_contamination(eigs, level, amplitude).vector(eigs)
            leading = self.leading_euclidean_coefficient(eigs, excitation, state)
            rows.append({
                "amplitude": float(amplitude),
                "level": level,
                "leading": float(leading.real),
                "exact": float(exact.real),
                "deviation": float(abs(leading - exact)),
            })
        return rows

    def trotter_unitary(self, params: ModelParams, ordering: TrotterOrdering, tau: float, steps: int = 1) -> np.ndarray:
        """
        Dense product-formula propagator (constant term dropped)

        Args:
            params: Model couplings
            ordering: Trotter ordering
            tau: Total evolution time
            steps: Number of repeated steps of size tau/steps
        """
        if steps < 1:
            raise ValueError("steps must be >= 1")
        step = np.eye(1 << config.N_TARGET_QUBITS, dtype=complex)
        for generator in ordering_factors(self.model_service, params, ordering):
            step = linalg.expm(-1j * (tau / steps) * to_matrix(generator)) @ step
        return np.linalg.matrix_power(step, steps)

    def exact_unitary(self, params: ModelParams, tau: float) -> np.ndarray:
        """e^{-i (H - c) tau} with the constant c dropped"""
        parts = self.model_service.hamiltonian_parts(params)
        generator = parts.one_body + parts.two_body + parts.three_body
        return linalg.expm(-1j * tau * to_matrix(generator))

    def trotter_correlator(self, params: ModelParams, ordering: TrotterOrdering, excitation: OperatorLike,
                           state, tau: float, steps: int = 1) -> complex:
        """<psi| V^dag H_I V H_I |psi> with V the product-formula propagator"""
        psi = state_array(state)
        a_matrix = as_matrix(excitation)
        propagator = self.trotter_unitary(params, ordering, tau, steps)
        return complex(psi.conj() @ propagator.conj().T @ a_matrix @ propagator @ a_matrix @ psi)

    def trotter_error(self, params: ModelParams, ordering: TrotterOrdering, tau: float, steps: int = 1) -> float:
        """eps(tau) = 2 ||V - U||_2 used in the correlator deviation bound"""
        difference = self.trotter_unitary(params, ordering, tau, steps) - self.exact_unitary(params, tau)
        return 2.0 * float(np.linalg.norm(difference, 2))
