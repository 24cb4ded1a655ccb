"""
Correlator estimation from Hadamard-test runs, measurement budgets, error bounds
and quality metrics.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

import config
from .circuit_service import Circuit, CircuitService
from .mitigation_service import (
    Estimate,
    MitigationConfig,
    MitigationService,
    ReadoutCalibration,
    calibrate_readout,
)
from .model_service import CorrelatorTerm, ModelParams, ModelService, MomentumVector, TrotterOrdering
from .noisy_sim_service import DensityMatrix, NoiseModel, NoisySimService, StateVector, derive_seed
from .oracle_service import OracleService
from .pauli_service import QubitOperator

logger = logging.getLogger(__name__)

Variant = Literal["bare", "mitigated", "exact_trotter", "exact"]
_BASES = ("X", "Y")


@dataclass(eq=False)
class CorrelatorSeries:
    q: MomentumVector
    ordering: Optional[TrotterOrdering]
    taus: np.ndarray
    values: np.ndarray
    sigma_re: np.ndarray
    sigma_im: np.ndarray
    variant: Variant
    # Readout-propagation part of sigma; the remainder of a mitigated sigma comes from the ZNE fit
    readout_sigma_re: Optional[np.ndarray] = None
    readout_sigma_im: Optional[np.ndarray] = None
    per_scale: List[dict] = field(default_factory=list)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        self.sigma_re = np.asarray(self.sigma_re, dtype=float)
        self.sigma_im = np.asarray(self.sigma_im, dtype=float)
        lengths = {len(self.taus), len(self.values), len(self.sigma_re), len(self.sigma_im)}
        if len(lengths) != 1:
            raise ValueError("series arrays must have equal length")
        if np.any(self.sigma_re < 0) or np.any(self.sigma_im < 0):
            raise ValueError("uncertainties must be non-negative")
        if self.variant in ("exact", "exact_trotter") and (np.any(self.sigma_re) or np.any(self.sigma_im)):
            raise ValueError(f"{self.variant} series carry zero uncertainty")

    @classmethod
    def exact_values(cls, q, ordering, taus, values, variant: Variant) -> "CorrelatorSeries":
        zeros = np.zeros(len(taus))
        return cls(q=q, ordering=ordering, taus=taus, values=values, sigma_re=zeros, sigma_im=zeros, variant=variant)

    @property
    def label(self) -> str:
        ordering = self.ordering.value if self.ordering is not None else "none"
        return f"q{self.q.tag}_{ordering}_{self.variant}"

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "tau": self.taus,
            "re": self.values.real,
            "re_err": self.sigma_re,
            "im": self.values.imag,
            "im_err": self.sigma_im,
        })
        if self.readout_sigma_re is not None:
            frame["re_err_readout"] = self.readout_sigma_re
            frame["im_err_readout"] = self.readout_sigma_im
        return frame


@dataclass(frozen=True)
class QualityReport:
    chi2: Tuple[float, float]
    nssd: Tuple[float, float]
    r: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "chi2": {"re": self.chi2[0], "im": self.chi2[1]},
            "nssd": {"re": self.nssd[0], "im": self.nssd[1]},
            "r": self.r,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class MeasurementBudget:
    epsilon: float
    n_terms: int
    total: int
    per_pair: int
    loose_total: int

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_terms": self.n_terms,
            "total_measurements": self.total,
            "measurements_per_pair": self.per_pair,
            "loose_total_measurements": self.loose_total,
        }


def measurement_budget(epsilon: float, excitations: Sequence[Sequence[float]]) -> MeasurementBudget:
    """
    Total measurements N for statistical precision epsilon under uniform allocation

    N = ceil(L^2 / eps^2 * max_k (sum_i alpha_i^2)^2), with L the largest
    number of Pauli terms over the excitations. The looser L^4 / eps^2 *
    max |alpha|^4 form is reported alongside.

    Args:
        epsilon: Target standard deviation of the correlator estimate
        excitations: Coefficient lists alpha_i(q_k), one per momentum

    Returns:
        MeasurementBudget
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    coefficient_lists = [np.abs(np.asarray(alphas, dtype=float)) for alphas in excitations]
    coefficient_lists = [alphas for alphas in coefficient_lists if alphas.size]
    if not coefficient_lists:
        raise ValueError("at least one non-empty coefficient list is required")
    n_terms = max(alphas.size for alphas in coefficient_lists)
    squared_norm = max(float(np.sum(alphas ** 2)) for alphas in coefficient_lists)
    largest = max(float(np.max(alphas)) for alphas in coefficient_lists)
    total = math.ceil(round(n_terms ** 2 / epsilon ** 2 * squared_norm ** 2, 6))
    loose = math.ceil(round(n_terms ** 4 / epsilon ** 2 * largest ** 4, 6))
    return MeasurementBudget(
        epsilon=epsilon,
        n_terms=n_terms,
        total=total,
        per_pair=math.ceil(total / n_terms ** 2),
        loose_total=loose,
    )


def deviation_bound(trotter_eps: float, fidelity: float, excitation: QubitOperator) -> float:
    """
    Upper bound ||H_I||_1^2 (eps + sqrt(1 - F)) on |C - C_approx|

    Args:
        trotter_eps: eps(tau) = 2 ||V - U||
        fidelity: Ground-state fidelity F of the prepared state
        excitation: Excitation operator whose Pauli coefficients give ||H_I||_1
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity}")
    if trotter_eps < 0:
        raise ValueError(f"trotter error must be non-negative, got {trotter_eps}")
    one_norm = sum(abs(value) for _, value in excitation)
    return one_norm ** 2 * (trotter_eps + math.sqrt(1.0 - fidelity))


def quality_metrics(series: CorrelatorSeries, reference: CorrelatorSeries, r: float = config.DEFAULT_RELATIVE_ERROR,
                    normalize_by: Literal["reference", "series"] = "reference") -> QualityReport:
    """
    Chi-squared and normalized sum of squared deviations, real and imaginary parts separately

    Args:
        series: Estimated series with non-zero uncertainties
        reference: Reference curve on the same tau grid
        r: Relative-error scale of the nssd denominator
        normalize_by: Curve that enters the nssd denominator

    Returns:
        QualityReport with (re, im) pairs
    """
    if r <= 0:
        raise ValueError(f"relative error must be positive, got {r}")
    if len(series.taus) != len(reference.taus) or not np.allclose(series.taus, reference.taus):
        raise ValueError("series and reference tau grids differ")
    chi2 = []
    nssd = []
    for part, sigma in ((np.real, series.sigma_re), (np.imag, series.sigma_im)):
        estimate = part(series.values)
        expected = part(reference.values)
        deviation = estimate - expected
        if np.any(sigma <= 0):
            raise ValueError("chi-squared needs strictly positive uncertainties")
        chi2.append(float(np.sum(deviation ** 2 / sigma ** 2)))
        scale = expected if normalize_by == "reference" else estimate
        denominator = float(np.sum((r * scale) ** 2))
        if denominator == 0.0:
            nssd.append(0.0 if not np.any(deviation) else float("inf"))
        else:
            nssd.append(float(np.sqrt(np.sum(deviation ** 2) / denominator)))
    return QualityReport(chi2=(chi2[0], chi2[1]), nssd=(nssd[0], nssd[1]), r=r, n_points=len(series.taus))


class EstimationService:
    def __init__(self, model_service: ModelService, oracle_service: OracleService,
                 circuit_service: CircuitService, noisy_sim: NoisySimService,
                 max_workers: int = config.MAX_WORKERS):
        """
        Initialize Estimation service

        Args:
            model_service: Hamiltonian and excitation construction
            oracle_service: Exact and dense-Trotter references
            circuit_service: Hadamard-test circuit synthesis
            noisy_sim: Circuit execution
            max_workers: Size of the worker pool for independent circuit runs
        """
        self.model_service = model_service
        self.oracle_service = oracle_service
        self.circuit_service = circuit_service
        self.noisy_sim = noisy_sim
        self.max_workers = max_workers

    def ground_state(self, params: ModelParams) -> np.ndarray:
        hamiltonian = self.model_service.build_qubit_hamiltonian(params)
        return self.oracle_service.diagonalize(hamiltonian).ground_state

    def exact_series(self, q: MomentumVector, taus: Sequence[float], params: ModelParams,
                     state: Optional[np.ndarray] = None, ordering: Optional[TrotterOrdering] = None) -> CorrelatorSeries:
        """Exact C(tau) from the eigenbasis of H"""
        state = self.ground_state(params) if state is None else state
        hamiltonian = self.model_service.build_qubit_hamiltonian(params)
        excitation = self.model_service.build_excitation(q, params)
        values = self.oracle_service.exact_correlator(hamiltonian, excitation, state, np.asarray(taus, dtype=float))
        return CorrelatorSeries.exact_values(q, ordering, taus, values, "exact")

    def trotter_series(self, q: MomentumVector, ordering: TrotterOrdering, taus: Sequence[float], params: ModelParams,
                       state: Optional[np.ndarray] = None, steps: int = 1) -> CorrelatorSeries:
        """Dense product-formula correlator, no sampling and no noise"""
        state = self.ground_state(params) if state is None else state
        excitation = self.model_service.build_excitation(q, params)
        values = [
            self.oracle_service.trotter_correlator(params, ordering, excitation, state, tau, steps) for tau in taus
        ]
        return CorrelatorSeries.exact_values(q, ordering, taus, values, "exact_trotter")

    def _term_circuit(self, term: CorrelatorTerm, ordering: TrotterOrdering, tau: float,
                      params: ModelParams, steps: int, basis: str, prelude: Optional[Circuit] = None):
        evolution = self.circuit_service.trotter_step(ordering, tau, params, steps)
        circuit = self.circuit_service.hadamard_test_circuit(term.right, term.left, evolution, init=prelude,
                                                             measure_basis=basis)
        return self.circuit_service.optimize(circuit)

    def _run_task(self, task) -> Tuple[Estimate, Optional[Estimate], list]:
        term, ordering, tau, params, steps, basis, prelude, init, shots, noise, calibration, mitigation, seed = task
        circuit = self._term_circuit(term, ordering, tau, params, steps, basis, prelude)
        if noise is None:
            final = self.noisy_sim.run_ideal(circuit, init)
            exact_value = self.noisy_sim.ancilla_expectation(final, "Z")
            if shots is None:
                return Estimate(exact_value, 0.0), None, []
            record = self.noisy_sim.sample_ancilla(final, "Z", shots, NoiseModel.ideal(), seed)
            return Estimate(record.mean, record.std_error), None, []
        result = mitigation.mitigated_expectation(circuit, DensityMatrix.from_state(init), noise, calibration, shots, seed)
        return result.bare, result.mitigated, [dict(p._asdict(), basis=basis, tau=tau) for p in result.per_scale]

    def estimate_correlator(self, q: MomentumVector, ordering: TrotterOrdering, taus: Sequence[float],
                            params: ModelParams, shots_per_point: Optional[int] = config.DEFAULT_SHOTS,
                            noise: Optional[NoiseModel] = None, mitigation_config: Optional[MitigationConfig] = None,
                            init_state: Optional[np.ndarray] = None, seed: int = config.DEFAULT_SEED,
                            steps: Union[int, Sequence[int]] = 1,
                            prelude: Optional[Circuit] = None) -> Tuple[CorrelatorSeries, CorrelatorSeries]:
        """
        Sampled C(tau) = sum alpha_l alpha_r s_lr(tau) from Hadamard-test circuits

        Each (term, basis) pair receives the same shot count. With ``noise`` set,
        every circuit runs on the density-matrix simulator at each noise scale and
        is readout-mitigated and extrapolated; without noise the state-vector
        simulator is used and the mitigated series equals the bare one.

        Args:
            q: Momentum transfer
            ordering: Trotter ordering of the evolution
            taus: Time grid
            params: Model couplings
            shots_per_point: Shots per (term, basis, scale); None evaluates exact expectations
            noise: Gate and readout noise, None for ideal execution
            mitigation_config: Scales, extrapolant and calibration shots
            init_state: Target-register state (default: exact ground state)
            seed: Run seed; every task uses a stream derived from it
            steps: Trotter steps per evaluation, or one count per tau
            prelude: Target-only circuit run on init_state before the Hadamard test

        Returns:
            (bare, mitigated) CorrelatorSeries
        """
        if shots_per_point is not None and shots_per_point < 1:
            raise ValueError("shots per point must be >= 1")
        if noise is not None and shots_per_point is None:
            raise ValueError("noisy estimation needs a finite shot count")
        taus = np.asarray(taus, dtype=float)
        step_counts = [steps] * len(taus) if isinstance(steps, (int, np.integer)) else [int(s) for s in steps]
        if len(step_counts) != len(taus) or min(step_counts, default=1) < 1:
            raise ValueError("steps must be >= 1, given once or once per tau")
        ordering = TrotterOrdering(ordering)
        target = self.ground_state(params) if init_state is None else np.asarray(init_state, dtype=complex)
        init = StateVector.with_ancilla(target)

        mitigation = None
        calibration: Optional[ReadoutCalibration] = None
        if noise is not None:
            mitigation_config = mitigation_config or MitigationConfig()
            mitigation = MitigationService(self.noisy_sim, mitigation_config)
            calibration = calibrate_readout(noise, mitigation_config.readout_calibration_shots,
                                            derive_seed(seed, q.tag, ordering.value, "calibration"))

        terms = self.model_service.correlator_terms(q, params)
        constant = sum(t.weight for t in terms if t.left.is_identity() and t.right.is_identity())
        circuit_terms = [t for t in terms if not (t.left.is_identity() and t.right.is_identity())]

        tasks = [
            (term, ordering, float(tau), params, step_counts[j], basis, prelude, init, shots_per_point, noise,
             calibration, mitigation, derive_seed(seed, q.tag, ordering.value, j, k, basis))
            for j, tau in enumerate(taus)
            for k, term in enumerate(circuit_terms)
            for basis in _BASES
        ]
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            results = list(pool.map(self._run_task, tasks))

        n_points = len(taus)
        bare_values = np.full(n_points, constant, dtype=complex)
        mitigated_values = bare_values.copy()
        variances = {name: np.zeros(n_points) for name in ("bare_re", "bare_im", "mit_re", "mit_im", "ro_re", "ro_im")}
        per_scale: List[dict] = []
        index = 0
        for j in range(n_points):
            for term in circuit_terms:
                (bare_x, mit_x, scales_x), (bare_y, mit_y, scales_y) = results[index], results[index + 1]
                index += 2
                weight = term.weight
                # s = <X> - i <Y>
                bare_values[j] += weight * complex(bare_x.value, -bare_y.value)
                variances["bare_re"][j] += (weight * bare_x.sigma) ** 2
                variances["bare_im"][j] += (weight * bare_y.sigma) ** 2
                if mit_x is None:
                    continue
                mitigated_values[j] += weight * complex(mit_x.value, -mit_y.value)
                variances["mit_re"][j] += (weight * mit_x.sigma) ** 2
                variances["mit_im"][j] += (weight * mit_y.sigma) ** 2
                variances["ro_re"][j] += (weight * scales_x[0]["sigma"]) ** 2
                variances["ro_im"][j] += (weight * scales_y[0]["sigma"]) ** 2
                for record in scales_x + scales_y:
                    per_scale.append(dict(record, left=term.left.label, right=term.right.label, weight=weight))

        bare = CorrelatorSeries(q=q, ordering=ordering, taus=taus, values=bare_values,
                                sigma_re=np.sqrt(variances["bare_re"]), sigma_im=np.sqrt(variances["bare_im"]),
                                variant="bare")
        if noise is None:
            mitigated = CorrelatorSeries(q=q, ordering=ordering, taus=taus, values=bare_values.copy(),
                                         sigma_re=bare.sigma_re.copy(), sigma_im=bare.sigma_im.copy(),
                                         variant="mitigated")
        else:
            mitigated = CorrelatorSeries(q=q, ordering=ordering, taus=taus, values=mitigated_values,
                                         sigma_re=np.sqrt(variances["mit_re"]), sigma_im=np.sqrt(variances["mit_im"]),
                                         variant="mitigated",
                                         readout_sigma_re=np.sqrt(variances["ro_re"]),
                                         readout_sigma_im=np.sqrt(variances["ro_im"]),
                                         per_scale=per_scale)
        logger.info("estimated q=%s ordering=%s over %d taus (%d circuit runs)",
                    q.tag, ordering.value, n_points, len(tasks))
        return bare, mitigated

    def sum_rule_check(self, q: MomentumVector, ordering: TrotterOrdering, params: ModelParams,
                       state: Optional[np.ndarray] = None, step: float = 1e-4) -> Dict[str, float]:
        """
        Compare the circuit correlator at tau = 0 and its first derivative with
        the zeroth and first (shifted) energy moments

        Returns:
            Mapping with circuit and exact values of both moments
        """
        state = self.ground_state(params) if state is None else state
        hamiltonian = self.model_service.build_qubit_hamiltonian(params)
        excitation = self.model_service.build_excitation(q, params)
        _, circuit_series = self.estimate_correlator(q, ordering, [0.0], params, shots_per_point=None,
                                                     init_state=state)
        forward = self.oracle_service.trotter_correlator(params, ordering, excitation, state, step)
        backward = self.oracle_service.trotter_correlator(params, ordering, excitation, state, -step)
        first_moment = (1j * (forward - backward) / (2.0 * step)).real
        return {
            "zeroth_circuit": float(circuit_series.values[0].real),
            "zeroth_exact": self.oracle_service.sum_rule(hamiltonian, excitation, state, 0),
            "first_trotter": float(first_moment),
            "first_exact": self.oracle_service.sum_rule(hamiltonian, excitation, state, 1, shifted=True),
        }
