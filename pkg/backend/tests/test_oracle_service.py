import numpy as np
import pytest
from scipy import linalg

import config

from services.exceptions import DimensionError, NonHermitianError, NormalizationError
from services.model_service import ModelParams, MomentumVector, TrotterOrdering
from services.pauli_service import QubitOperator, expectation, to_matrix


def test_diagonalize_single_z(oracle_service):
    eigs = oracle_service.diagonalize(QubitOperator.from_label("Z"))
    np.testing.assert_allclose(eigs.energies, [-1.0, 1.0])


def test_eigensystem_cache_is_bounded(oracle_service, monkeypatch):
    monkeypatch.setattr(config, "CACHE_SIZE", 2)
    operators = [QubitOperator.from_label("Z") * scale for scale in (1.0, 2.0, 3.0)]
    first = oracle_service.diagonalize(operators[0])
    for op in operators[1:]:
        oracle_service.diagonalize(op)
    assert len(oracle_service._eigen_cache) == 2
    assert operators[0] not in oracle_service._eigen_cache
    assert oracle_service.diagonalize(operators[0]) is not first
    nudged = operators[2] + QubitOperator.from_label("Z") * 1e-15
    assert oracle_service.diagonalize(nudged) is oracle_service.diagonalize(operators[2])


def test_free_ground_energy_and_gap(oracle_service, model_service, free_params):
    eigs = oracle_service.diagonalize(model_service.build_qubit_hamiltonian(free_params))
    assert eigs.ground_energy == pytest.approx(0.0, abs=1e-12)
    assert eigs.gap == pytest.approx(4.0)


def test_eigensystem_residuals(eigs, hamiltonian):
    matrix = to_matrix(hamiltonian)
    residual = matrix @ eigs.vectors - eigs.vectors * eigs.energies
    assert np.max(np.abs(residual)) < 1e-10
    np.testing.assert_allclose(eigs.vectors.conj().T @ eigs.vectors, np.eye(16), atol=1e-12)
    assert np.sum(eigs.energies) == pytest.approx(np.trace(matrix).real)


def test_diagonalize_rejects_bad_input(oracle_service):
    with pytest.raises(NonHermitianError):
        oracle_service.diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        oracle_service.diagonalize(np.zeros((2, 3)))


def test_correlator_at_zero(oracle_service, model_service, hamiltonian, ground_state, q01, params):
    excitation = model_service.build_excitation(q01, params)
    value = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, 0.0)
    z1z3 = expectation(ground_state, QubitOperator.from_label("ZIZI")).real
    assert value == pytest.approx(2.0 + 2.0 * z1z3, abs=1e-12)


def test_identity_excitation_gives_constant(oracle_service, hamiltonian, ground_state):
    excitation = QubitOperator.identity(4, 1.5)
    values = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, np.linspace(0, 2, 5))
    np.testing.assert_allclose(values, 2.25, atol=1e-12)


def test_correlator_matches_dense_exponentials(oracle_service, model_service, hamiltonian, ground_state, q01, params):
    excitation = model_service.build_excitation(q01, params)
    tau = 0.2
    propagator = linalg.expm(-1j * tau * to_matrix(hamiltonian))
    a = to_matrix(excitation)
    dense = ground_state.conj() @ propagator.conj().T @ a @ propagator @ a @ ground_state
    assert oracle_service.exact_correlator(hamiltonian, excitation, ground_state, tau) == pytest.approx(dense, abs=1e-10)


def test_correlator_conjugation_symmetry(oracle_service, model_service, hamiltonian, ground_state, q11, params):
    excitation = model_service.build_excitation(q11, params)
    taus = np.linspace(0.1, 1.0, 4)
    forward = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, taus)
    backward = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, -taus)
    np.testing.assert_allclose(backward, forward.conj(), atol=1e-10)


def test_correlator_rejects_unnormalized_state(oracle_service, hamiltonian, q01, model_service, params):
    with pytest.raises(NormalizationError):
        oracle_service.exact_correlator(hamiltonian, model_service.build_excitation(q01, params), np.ones(16), 0.1)


def test_free_spectral_line(oracle_service, model_service, free_params):
    hamiltonian = model_service.build_qubit_hamiltonian(free_params)
    ground = oracle_service.diagonalize(hamiltonian).ground_state
    lines = [line for line in oracle_service.spectral_response(hamiltonian, QubitOperator.from_label("ZIII"), ground)
             if abs(line.weight) > 1e-10]
    # the omega = 4 level is degenerate, so the weight may be split across eigenvectors
    assert all(line.omega == pytest.approx(4.0) for line in lines)
    assert sum(line.weight.real for line in lines) == pytest.approx(1.0)


def test_identity_spectral_line(oracle_service, hamiltonian, ground_state):
    lines = [line for line in oracle_service.spectral_response(hamiltonian, QubitOperator.identity(4), ground_state)
             if abs(line.weight) > 1e-10]
    assert len(lines) == 1
    assert lines[0].omega == pytest.approx(0.0, abs=1e-10)


def test_spectral_lines_reproduce_correlator(oracle_service, model_service, hamiltonian, ground_state, q11, params):
    excitation = model_service.build_excitation(q11, params)
    lines = oracle_service.spectral_response(hamiltonian, excitation, ground_state)
    assert all(line.weight.real >= -1e-12 for line in lines)
    total = sum(line.weight.real for line in lines)
    assert total == pytest.approx(oracle_service.sum_rule(hamiltonian, excitation, ground_state, 0), abs=1e-10)
    for tau in (0.3, 0.7):
        reconstructed = sum(line.weight * np.exp(-1j * line.omega * tau) for line in lines)
        exact = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, tau)
        assert reconstructed == pytest.approx(exact, abs=1e-10)


def test_general_state_lines_reproduce_correlator(oracle_service, model_service, hamiltonian, eigs, q01, params):
    excitation = model_service.build_excitation(q01, params)
    state = oracle_service.make_contaminated_state(eigs, 0.8, seed=3).vector(eigs)
    lines = oracle_service.spectral_response(hamiltonian, excitation, state)
    tau = 0.4
    reconstructed = sum(line.weight * np.exp(-1j * line.omega * tau) for line in lines)
    assert reconstructed == pytest.approx(oracle_service.exact_correlator(hamiltonian, excitation, state, tau), abs=1e-10)


def test_sum_rules(oracle_service, model_service, hamiltonian, ground_state, q01, params):
    identity_excitation = model_service.build_excitation(MomentumVector(m=0, n=0), params)
    assert oracle_service.sum_rule(hamiltonian, identity_excitation, ground_state, 0) == pytest.approx(4.0)

    excitation = model_service.build_excitation(q01, params)
    c0 = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, 0.0)
    assert oracle_service.sum_rule(hamiltonian, excitation, ground_state, 0) == pytest.approx(c0.real, abs=1e-12)

    step = 1e-5
    derivative = (oracle_service.exact_correlator(hamiltonian, excitation, ground_state, step)
                  - oracle_service.exact_correlator(hamiltonian, excitation, ground_state, -step)) / (2 * step)
    first = oracle_service.sum_rule(hamiltonian, excitation, ground_state, 1, shifted=True)
    assert (1j * derivative).real == pytest.approx(first, abs=1e-6)

    ground_energy = oracle_service.diagonalize(hamiltonian).ground_energy
    unshifted = oracle_service.sum_rule(hamiltonian, excitation, ground_state, 1)
    assert unshifted == pytest.approx(first + ground_energy * c0.real, abs=1e-9)

    with pytest.raises(ValueError):
        oracle_service.sum_rule(hamiltonian, excitation, ground_state, -1)


def test_moment_series_approximates_small_tau(oracle_service, model_service, hamiltonian, ground_state, q01, params):
    excitation = model_service.build_excitation(q01, params)
    tau = 0.01
    series = oracle_service.moment_series(hamiltonian, excitation, ground_state, tau, order=8)
    exact = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, tau)
    assert series == pytest.approx(exact, abs=1e-7)


def test_euclidean_correlator(oracle_service, model_service, hamiltonian, eigs, ground_state, q01, params):
    excitation = model_service.build_excitation(q01, params)
    c0 = oracle_service.exact_correlator(hamiltonian, excitation, ground_state, 0.0)
    assert oracle_service.euclidean_correlator(hamiltonian, excitation, ground_state, 0.0).real == pytest.approx(c0.real)

    a_eigen = eigs.vectors.conj().T @ to_matrix(excitation) @ eigs.vectors
    weights = np.abs(a_eigen[0]) ** 2
    tau_e = 0.5
    expected = np.sum(np.exp(-(eigs.ground_energy + eigs.energies) * tau_e) * weights)
    assert oracle_service.euclidean_correlator(eigs, excitation, ground_state, tau_e).real == pytest.approx(expected)

    # lowest populated level dominates once tau_E is many gaps long
    populated = weights > 1e-12
    lowest = eigs.energies[populated].min()
    lead = populated & (np.abs(eigs.energies - lowest) < 1e-9)
    next_gap = (eigs.energies[populated & ~lead] - lowest).min()
    shifted = to_matrix(hamiltonian) - 0.5 * (eigs.ground_energy + lowest) * np.eye(16)
    full = oracle_service.euclidean_correlator(shifted, excitation, ground_state, 20.0 / next_gap).real
    assert np.sum(weights[lead]) / full == pytest.approx(1.0, abs=1e-3)

    with pytest.raises(ValueError):
        oracle_service.euclidean_correlator(eigs, excitation, ground_state, -1.0)


def test_contamination_deviation_is_linear(oracle_service, model_service, eigs, q01, params):
    excitation = model_service.build_excitation(q01, params)
    rows = oracle_service.contamination_scan(eigs, excitation, [1e-3, 1e-2, 1e-1])
    amplitudes = np.array([row["amplitude"] for row in rows])
    deviations = np.array([row["deviation"] for row in rows])
    assert np.all(deviations > 0)
    slope = np.polyfit(np.log10(amplitudes), np.log10(deviations), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_contaminated_state_fidelity(oracle_service, eigs):
    exact = oracle_service.make_contaminated_state(eigs, 1.0, seed=1)
    np.testing.assert_allclose(exact.vector(eigs), eigs.ground_state)

    state = oracle_service.make_contaminated_state(eigs, 0.962, seed=5)
    assert abs(state.coefficients[0]) ** 2 == pytest.approx(0.962)
    assert np.linalg.norm(state.coefficients) == pytest.approx(1.0, abs=1e-12)

    first = oracle_service.make_contaminated_state(eigs, 0.5, seed=11)
    second = oracle_service.make_contaminated_state(eigs, 0.5, seed=11)
    np.testing.assert_array_equal(first.coefficients, second.coefficients)

    with pytest.raises(ValueError):
        oracle_service.make_contaminated_state(eigs, 0.0, seed=1)


@pytest.mark.parametrize("ordering", list(TrotterOrdering))
def test_trotter_unitary_is_first_order(oracle_service, params, ordering):
    tau = 0.005
    one_step = np.linalg.norm(oracle_service.trotter_unitary(params, ordering, tau, 1)
                              - oracle_service.exact_unitary(params, tau), 2)
    two_steps = np.linalg.norm(oracle_service.trotter_unitary(params, ordering, tau, 2)
                               - oracle_service.exact_unitary(params, tau), 2)
    assert 0.35 < two_steps / one_step < 0.65


def test_trotter_unitary_identity_at_zero(oracle_service, params):
    np.testing.assert_allclose(oracle_service.trotter_unitary(params, TrotterOrdering.B2, 0.0), np.eye(16), atol=1e-14)


@pytest.mark.parametrize("ordering", [TrotterOrdering.B1, TrotterOrdering.B2])
def test_block_orderings_preserve_zeroth_sum_rule(oracle_service, model_service, hamiltonian, ground_state, q01,
                                                   params, ordering):
    excitation = model_service.build_excitation(q01, params)
    trotter = oracle_service.trotter_correlator(params, ordering, excitation, ground_state, 0.0)
    assert trotter == pytest.approx(oracle_service.sum_rule(hamiltonian, excitation, ground_state, 0), abs=1e-10)


def test_trotter_error_vanishes_for_commuting_model(oracle_service):
    params = ModelParams(t=0.0, U=2.0)
    assert oracle_service.trotter_error(params, TrotterOrdering.A1, 0.3) == pytest.approx(0.0, abs=1e-12)
