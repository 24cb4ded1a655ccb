"""
Readout-error mitigation and zero-noise extrapolation by local CNOT folding.
"""

from dataclasses import dataclass, field
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import curve_fit

import config
from .circuit_service import ANCILLA, Circuit
from .exceptions import MitigationError
from .noisy_sim_service import DensityMatrix, NoiseModel, NoisySimService, ShotRecord, derive_seed

logger = logging.getLogger(__name__)

Extrapolant = Literal["linear", "richardson2", "exponential"]
_MIN_POINTS = {"linear": 2, "richardson2": 3, "exponential": 2}
_SINGULAR_DETERMINANT = 1e-12


class Estimate(NamedTuple):
    value: float
    sigma: float


class ScalePoint(NamedTuple):
    scale: int
    value: float
    sigma: float


class MitigationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scales: Tuple[int, ...] = config.DEFAULT_SCALES
    extrapolant: Extrapolant = config.DEFAULT_EXTRAPOLANT
    readout_calibration_shots: int = Field(default=config.DEFAULT_CALIBRATION_SHOTS, ge=1)

    @field_validator("scales")
    @classmethod
    def _odd_increasing(cls, scales):
        if not scales or scales[0] != 1:
            raise ValueError("noise scales must start at 1")
        if any(s % 2 == 0 for s in scales):
            raise ValueError("noise scales must be odd")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("noise scales must be strictly increasing")
        return tuple(scales)

    @model_validator(mode="after")
    def _enough_points(self):
        if len(self.scales) < _MIN_POINTS[self.extrapolant]:
            raise ValueError(f"{self.extrapolant} extrapolation needs at least "
                             f"{_MIN_POINTS[self.extrapolant]} scales")
        return self


@dataclass(frozen=True, eq=False)
class ReadoutCalibration:
    matrix: np.ndarray
    sigma: np.ndarray
    shots: Optional[int] = None

    @property
    def flip_0_to_1(self) -> float:
        return float(self.matrix[0, 1])

    @property
    def flip_1_to_0(self) -> float:
        return float(self.matrix[1, 0])


@dataclass(frozen=True)
class MitigatedValue:
    bare: Estimate
    per_scale: List[ScalePoint] = field(default_factory=list)
    mitigated: Estimate = Estimate(0.0, 0.0)
    # sigma of the readout-mitigated scale-1 point, reported next to the fit sigma
    readout_sigma: float = 0.0

    def to_dict(self) -> dict:
        return {
            "bare": self.bare._asdict(),
            "per_scale": [p._asdict() for p in self.per_scale],
            "mitigated": self.mitigated._asdict(),
            "readout_sigma": self.readout_sigma,
        }


def calibrate_readout(noise: NoiseModel, shots: Optional[int], seed: int, qubit: int = ANCILLA) -> ReadoutCalibration:
    """
    Estimate the confusion matrix by preparing |0> and |1> and measuring

    Args:
        noise: Noise model holding the true confusion matrix
        shots: Shots per calibration circuit; None gives the infinite-shot limit
        seed: Seed of the sampling stream
        qubit: Measured qubit

    Returns:
        ReadoutCalibration with binomial standard errors

    Raises:
        MitigationError: If the estimate cannot be inverted
    """
    true_matrix = noise.confusion(qubit)
    if shots is None:
        estimate = true_matrix.copy()
        sigma = np.zeros((2, 2))
    else:
        if shots < 1:
            raise MitigationError("calibration needs at least one shot")
        rng = np.random.default_rng(seed)
        flips = np.array([rng.binomial(shots, true_matrix[0, 1]), rng.binomial(shots, true_matrix[1, 0])]) / shots
        estimate = np.array([[1.0 - flips[0], flips[0]], [flips[1], 1.0 - flips[1]]])
        errors = np.sqrt(flips * (1.0 - flips) / shots)
        sigma = np.array([[errors[0], errors[0]], [errors[1], errors[1]]])
    if abs(np.linalg.det(estimate)) < _SINGULAR_DETERMINANT:
        raise MitigationError("estimated confusion matrix is singular")
    logger.debug("readout calibration: p(0->1)=%.4g p(1->0)=%.4g", estimate[0, 1], estimate[1, 0])
    return ReadoutCalibration(matrix=estimate, sigma=sigma, shots=shots)


def mitigate_readout(record: ShotRecord, calibration: ReadoutCalibration) -> Estimate:
    """
    Invert the confusion matrix on the outcome frequencies of one qubit

    The result is a quasi-expectation that may leave [-1, 1]; it is not clipped.
    Shot noise and calibration uncertainty are propagated to first order.

    Args:
        record: Measured counts
        calibration: Estimated confusion matrix with its standard errors

    Returns:
        Estimate of the +1/-1 expectation value
    """
    matrix = calibration.matrix
    if abs(np.linalg.det(matrix)) < _SINGULAR_DETERMINANT:
        raise MitigationError("confusion matrix is singular")
    true_frequencies = np.linalg.solve(matrix.T, record.frequencies)
    value = float(true_frequencies[0] - true_frequencies[1])

    a, b = calibration.flip_0_to_1, calibration.flip_1_to_0
    sigma_a, sigma_b = float(calibration.sigma[0, 1]), float(calibration.sigma[1, 0])
    contrast = 1.0 - a - b
    variance = (
        record.std_error ** 2
        + ((1.0 + value) * sigma_a) ** 2
        + ((1.0 - value) * sigma_b) ** 2
    ) / contrast ** 2
    if abs(value) > 1.0:
        logger.warning("readout-mitigated expectation %.4f lies outside [-1, 1]", value)
    return Estimate(value, float(np.sqrt(variance)))


def fold_circuit(circuit: Circuit, scale: int) -> Circuit:
    """
    Replace every entangling gate by `scale` consecutive copies

    Args:
        circuit: Circuit to fold
        scale: Odd noise amplification factor

    Returns:
        Circuit with the same unitary and scale-times the entangling gates
    """
    if scale < 1 or scale % 2 == 0:
        raise MitigationError(f"scale must be an odd positive integer, got {scale}")
    gates = []
    for gate in circuit.gates:
        gates.extend([gate] * (scale if gate.is_entangling else 1))
    return Circuit(circuit.n_qubits, gates)


def _weighted_polynomial_fit(scales: np.ndarray, values: np.ndarray, sigmas: np.ndarray, degree: int) -> Estimate:
    design = np.vander(scales, degree + 1, increasing=True)
    weighted = design / sigmas[:, None]
    coefficients, *_ = np.linalg.lstsq(weighted, values / sigmas, rcond=None)
    covariance = np.linalg.inv(weighted.T @ weighted)
    return Estimate(float(coefficients[0]), float(np.sqrt(max(covariance[0, 0], 0.0))))


def _exponential(scale, amplitude, rate):
    return amplitude * np.exp(-rate * scale)


def _exponential_fit(scales: np.ndarray, values: np.ndarray, sigmas: np.ndarray) -> Estimate:
    if np.any(values <= 0) and np.any(values >= 0):
        raise MitigationError("exponential extrapolation needs values of one sign")
    sign = 1.0 if values[0] > 0 else -1.0
    slope, intercept = np.polyfit(scales, np.log(np.abs(values)), 1)
    try:
        (amplitude, rate), covariance = curve_fit(
            _exponential, scales, sign * values, p0=(np.exp(intercept), -slope),
            sigma=sigmas, absolute_sigma=True, maxfev=10_000,
        )
    except RuntimeError as error:
        raise MitigationError(f"exponential fit did not converge: {error}") from error
    return Estimate(float(sign * amplitude), float(np.sqrt(max(covariance[0, 0], 0.0))))


def zne_extrapolate(points: Sequence[ScalePoint], method: Extrapolant = "linear") -> Estimate:
    """
    Weighted least-squares fit in the scale variable, evaluated at zero noise

    Args:
        points: (scale, value, sigma) per noise amplification factor
        method: 'linear', 'richardson2' (quadratic) or 'exponential'

    Returns:
        Zero-noise Estimate with sigma from the fit covariance
    """
    if method not in _MIN_POINTS:
        raise MitigationError(f"unknown extrapolant {method!r}")
    if len(points) < _MIN_POINTS[method]:
        raise MitigationError(f"{method} extrapolation needs at least {_MIN_POINTS[method]} points")
    scales = np.array([p.scale for p in points], dtype=float)
    values = np.array([p.value for p in points], dtype=float)
    sigmas = np.array([p.sigma for p in points], dtype=float)
    if np.any(sigmas < 0):
        raise MitigationError("uncertainties must be non-negative")

    exact = not np.any(sigmas > 0)
    if exact:
        sigmas = np.ones_like(values)
    else:
        sigmas = np.where(sigmas > 0, sigmas, sigmas[sigmas > 0].min())

    if method == "exponential":
        result = _exponential_fit(scales, values, sigmas)
        fitted = None
    else:
        degree = 1 if method == "linear" else 2
        result = _weighted_polynomial_fit(scales, values, sigmas, degree)
        fitted = np.polyval(np.polyfit(scales, values, degree), scales)

    if exact:
        if fitted is not None and np.max(np.abs(fitted - values)) > 1e-12:
            raise MitigationError("zero uncertainties with values inconsistent with the extrapolant")
        return Estimate(result.value, 0.0)
    return result


class MitigationService:
    def __init__(self, noisy_sim: NoisySimService, mitigation_config: Optional[MitigationConfig] = None):
        """
        Initialize Mitigation service

        Args:
            noisy_sim: Simulator used to run the folded circuits
            mitigation_config: Scales, extrapolant and calibration shots
        """
        self.noisy_sim = noisy_sim
        self.config = mitigation_config or MitigationConfig()

    def mitigated_expectation(self, circuit: Circuit, init: DensityMatrix, noise: NoiseModel,
                              calibration: ReadoutCalibration, shots: int, seed: int) -> MitigatedValue:
        """
        Bare, per-scale and zero-noise estimates of the ancilla Z expectation

        The circuit must already end with the measurement basis change.

        Args:
            circuit: Hadamard-test circuit
            init: Initial density matrix
            noise: Gate and readout noise
            calibration: Readout calibration used for the inversion
            shots: Shots per noise scale
            seed: Seed of this task; each scale draws from a derived stream

        Returns:
            MitigatedValue
        """
        bare = None
        per_scale: List[ScalePoint] = []
        for scale in self.config.scales:
            rho = self.noisy_sim.run_noisy(fold_circuit(circuit, scale), init, noise)
            record = self.noisy_sim.sample_ancilla(rho, "Z", shots, noise, derive_seed(seed, scale))
            if scale == 1:
                bare = Estimate(record.mean, record.std_error)
            corrected = mitigate_readout(record, calibration)
            per_scale.append(ScalePoint(scale, corrected.value, corrected.sigma))
        mitigated = zne_extrapolate(per_scale, self.config.extrapolant)
        return MitigatedValue(bare=bare, per_scale=per_scale, mitigated=mitigated, readout_sigma=per_scale[0].sigma)
