"""
Time-to-frequency reconstruction of the response from a two-time correlator grid.

The two-time correlator is C(tau, t) = <Psi| H_I(t + tau) H_I(t) |Psi> with
H_I(s) = e^{iHs} H_I e^{-iHs}. Its t = 0 row is the one-time correlator C(tau),
and excitation energies E_n - E_0 show up at positive omega in the transform
with kernel e^{i omega tau}.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .estimation_service import EstimationService
from .mitigation_service import MitigationConfig
from .model_service import ModelParams, MomentumVector, TrotterOrdering
from .noisy_sim_service import NoiseModel
from .oracle_service import OracleService, OperatorLike, as_matrix, state_array

logger = logging.getLogger(__name__)

Source = Literal["exact", "trotter", "noisy"]


@dataclass(frozen=True, eq=False)
class TwoTimeGrid:
    delta: float
    n_t: int
    # values[j, l] = C(tau_j, t_l), both indices running over -n_t..n_t
    values: np.ndarray
    evaluations: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"grid step must be positive, got {self.delta}")
        side = 2 * self.n_t + 1
        if self.values.shape != (side, side):
            raise ValueError(f"grid values must be {side}x{side}, got {self.values.shape}")

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(-self.n_t, self.n_t + 1)

    @property
    def half_window(self) -> float:
        """T with (2 N_t + 1) delta = 2T"""
        return (2 * self.n_t + 1) * self.delta / 2.0

    def __add__(self, other: "TwoTimeGrid") -> "TwoTimeGrid":
        if other.delta != self.delta or other.n_t != self.n_t:
            raise ValueError("grids must share step and size")
        return TwoTimeGrid(self.delta, self.n_t, self.values + other.values, self.evaluations + other.evaluations)


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    omegas: np.ndarray
    s_values: np.ndarray
    resolution: float

    def __post_init__(self):
        if len(self.omegas) != len(self.s_values):
            raise ValueError("omega and spectrum arrays must have equal length")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def peak(self) -> float:
        return float(self.omegas[int(np.argmax(np.abs(self.s_values)))])


def resolution_cost(delta_omega: float, delta: float) -> Tuple[int, int]:
    """
    Half-width N_t and number of correlator evaluations for a target resolution

    The evaluation count (2 N_t + 1)^2 grows as 1/delta_omega^2.

    Args:
        delta_omega: Target frequency resolution
        delta: Time step of both grid axes

    Returns:
        (N_t, evaluations)
    """
    if delta_omega <= 0:
        raise ValueError(f"resolution must be positive, got {delta_omega}")
    if delta <= 0:
        raise ValueError(f"time step must be positive, got {delta}")
    n_t = math.ceil(round(1.0 / (delta * delta_omega), 9))
    return n_t, (2 * n_t + 1) ** 2


def midpoint_error_bound(m2: float, window: float, tau_tilde: float, n_window: int, n_tau: int) -> float:
    """(M2 / 24) T^3 tau~^3 / (N_T^2 N_tau^2)"""
    if n_window <= 0 or n_tau <= 0:
        raise ValueError("subdivision counts must be positive")
    return abs(m2) / 24.0 * window ** 3 * tau_tilde ** 3 / (n_window ** 2 * n_tau ** 2)


def default_omegas(delta: float, delta_omega: float) -> np.ndarray:
    """Uniform grid over [-pi/delta, pi/delta] with spacing delta_omega / 2"""
    step = delta_omega / 2.0
    limit = math.pi / delta
    count = math.floor(round(2.0 * limit / step, 9))
    return -limit + step * np.arange(count + 1)


def _step_count(time: float, max_step: float) -> int:
    return max(1, math.ceil(round(time / max_step, 9)))


def riemann_spectrum(grid: TwoTimeGrid, omegas: Sequence[float]) -> SpectralGrid:
    """
    S(omega) = delta^2 / (4 T^2) sum_j sum_l e^{i tau_j omega} C(tau_j, t_l)

    Args:
        grid: Two-time correlator grid
        omegas: Frequencies to evaluate

    Returns:
        SpectralGrid with resolution pi / T
    """
    omegas = np.asarray(omegas, dtype=float)
    window = grid.half_window
    kernel = np.exp(1j * np.outer(omegas, grid.times))
    s_values = grid.delta ** 2 / (4.0 * window ** 2) * (kernel @ grid.values.sum(axis=1))
    return SpectralGrid(omegas=omegas, s_values=s_values, resolution=math.pi / window)


class SpectralService:
    def __init__(self, oracle_service: OracleService, estimation_service: Optional[EstimationService] = None):
        """
        Initialize Spectral service

        Args:
            oracle_service: Exact and dense-Trotter backends
            estimation_service: Circuit backend for the noisy grid
        """
        self.oracle_service = oracle_service
        self.estimation_service = estimation_service

    def two_time_correlator(self, hamiltonian, excitation: OperatorLike, state, delta: float, n_t: int,
                            source: Source = "exact", *, params: Optional[ModelParams] = None,
                            ordering: Optional[TrotterOrdering] = None, q: Optional[MomentumVector] = None,
                            noise: Optional[NoiseModel] = None, shots: Optional[int] = None,
                            mitigation_config: Optional[MitigationConfig] = None, seed: int = 0,
                            max_step: float = 0.1) -> TwoTimeGrid:
        """
        Fill C(tau_j, t_l) on a (2 N_t + 1)^2 grid with step delta

        Args:
            hamiltonian: QubitOperator, dense matrix or EigenSystem
            excitation: Excitation operator H_I
            state: Normalized target state
            delta: Time step of both axes
            n_t: Half-width of the grid
            source: 'exact' (eigenbasis double sum), 'trotter' (dense product
                formula) or 'noisy' (Hadamard-test circuits, mitigated)
            params, ordering: Product-formula inputs for 'trotter' and 'noisy'
            q, noise, shots, mitigation_config, seed: Circuit inputs for 'noisy'
            max_step: Largest Trotter step; longer times use repeated steps

        Returns:
            TwoTimeGrid
        """
        if n_t < 0:
            raise ValueError(f"grid half-width must be non-negative, got {n_t}")
        if delta <= 0:
            raise ValueError(f"grid step must be positive, got {delta}")
        times = delta * np.arange(-n_t, n_t + 1)
        if source == "exact":
            values = self._exact_grid(hamiltonian, excitation, state, times)
        elif source == "trotter":
            values = self._trotter_grid(excitation, state, times, params, ordering, max_step)
        elif source == "noisy":
            values = self._noisy_grid(state, times, params, ordering, q, noise, shots, mitigation_config, seed, max_step)
        else:
            raise ValueError(f"unknown correlator source {source!r}")
        evaluations = values.size
        logger.info("two-time grid: source=%s, %d evaluations", source, evaluations)
        return TwoTimeGrid(delta=delta, n_t=n_t, values=values, evaluations=evaluations)

    def _exact_grid(self, hamiltonian, excitation, state, times: np.ndarray) -> np.ndarray:
        eigs, psi_eigen, a_eigen = self.oracle_service.prepare(hamiltonian, excitation, state)
        populated = np.abs(psi_eigen) > 1e-12
        gaps = np.diff(eigs.energies)
        if np.any(gaps < 1e-9) and np.count_nonzero(populated) > 1:
            logger.warning("degenerate spectrum: two-time formula evaluated as the naive double sum")
        energies = eigs.energies
        values = np.empty((times.size, times.size), dtype=complex)
        for l, t in enumerate(times):
            left = psi_eigen.conj() * np.exp(1j * energies * t)
            right = a_eigen @ (psi_eigen * np.exp(-1j * energies * t))
            for j, tau in enumerate(times):
                values[j, l] = (left * np.exp(1j * energies * tau)) @ a_eigen @ (np.exp(-1j * energies * tau) * right)
        return values

    def _propagator(self, params, ordering, time: float, max_step: float) -> np.ndarray:
        steps = _step_count(abs(time), max_step)
        return self.oracle_service.trotter_unitary(params, ordering, time, steps)

    def _trotter_grid(self, excitation, state, times, params, ordering, max_step) -> np.ndarray:
        if params is None or ordering is None:
            raise ValueError("the trotter source needs model parameters and an ordering")
        psi = state_array(state)
        a_matrix = as_matrix(excitation)
        propagators = {round(t, 12): self._propagator(params, ordering, t, max_step) for t in times}
        values = np.empty((times.size, times.size), dtype=complex)
        for l, t in enumerate(times):
            evolved = propagators[round(t, 12)] @ psi
            for j, tau in enumerate(times):
                # V(tau)^dag H_I V(tau) H_I on the state evolved to t
                v_tau = propagators[round(tau, 12)]
                values[j, l] = evolved.conj() @ v_tau.conj().T @ a_matrix @ v_tau @ a_matrix @ evolved
        return values

    def _noisy_grid(self, state, times, params, ordering, q, noise, shots, mitigation_config, seed, max_step):
        if self.estimation_service is None:
            raise ValueError("the noisy source needs an estimation service")
        if params is None or ordering is None or q is None:
            raise ValueError("the noisy source needs model parameters, an ordering and a momentum")
        psi = state_array(state)
        circuits = self.estimation_service.circuit_service
        steps = [_step_count(abs(tau), max_step) for tau in times]
        values = np.empty((times.size, times.size), dtype=complex)
        for l, t in enumerate(times):
            # evolution to t is part of every circuit
            prelude = None
            if t != 0:
                prelude = circuits.trotter_step(ordering, float(t), params, _step_count(abs(t), max_step))
            _, mitigated = self.estimation_service.estimate_correlator(
                q, ordering, times, params, shots_per_point=shots, noise=noise,
                mitigation_config=mitigation_config, init_state=psi, seed=seed + l, steps=steps, prelude=prelude,
            )
            values[:, l] = mitigated.values
        return values
