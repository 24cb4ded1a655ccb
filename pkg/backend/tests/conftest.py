import numpy as np
import pytest

from services.circuit_service import CircuitService
from services.estimation_service import EstimationService
from services.model_service import ModelParams, ModelService, MomentumVector
from services.noisy_sim_service import NoisySimService
from services.oracle_service import OracleService


@pytest.fixture
def params():
    return ModelParams(t=1.0, U=2.0, V=3.0)


@pytest.fixture
def free_params():
    return ModelParams(t=1.0, U=0.0, V=0.0)


@pytest.fixture
def q01():
    return MomentumVector(m=0, n=1)


@pytest.fixture
def q11():
    return MomentumVector(m=1, n=1)


@pytest.fixture
def model_service():
    return ModelService()


@pytest.fixture
def oracle_service(model_service):
    return OracleService(model_service)


@pytest.fixture
def circuit_service(model_service):
    return CircuitService(model_service)


@pytest.fixture
def routed_circuit_service(model_service):
    return CircuitService(model_service, t_connectivity=True)


@pytest.fixture
def noisy_sim_service():
    return NoisySimService()


@pytest.fixture
def estimation_service(model_service, oracle_service, circuit_service, noisy_sim_service):
    return EstimationService(model_service, oracle_service, circuit_service, noisy_sim_service, max_workers=2)


@pytest.fixture
def hamiltonian(model_service, params):
    return model_service.build_qubit_hamiltonian(params)


@pytest.fixture
def eigs(oracle_service, hamiltonian):
    return oracle_service.diagonalize(hamiltonian)


@pytest.fixture
def ground_state(eigs):
    return eigs.ground_state


@pytest.fixture
def rng():
    return np.random.default_rng(7)
