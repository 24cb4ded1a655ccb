import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
import pandas as pd

import config
from services.circuit_service import CircuitService
from services.estimation_service import (
    EstimationService,
    deviation_bound,
    measurement_budget,
    quality_metrics,
)
from services.exceptions import ConfigError, CorrelatorError, InvariantViolation
from services.experiment_config import ExperimentConfig, load_experiment_config
from services.model_service import ModelService, MomentumVector
from services.noisy_sim_service import NoisySimService, derive_seed
from services.oracle_service import OracleService
from services.output_service import OutputService
from services.spectral_service import SpectralService, default_omegas, resolution_cost, riemann_spectrum

logger = logging.getLogger("correlator")

EXIT_OK = 0
EXIT_CONFIG = ConfigError.exit_code
EXIT_INVARIANT = InvariantViolation.exit_code
EXIT_IO = 4

# Initialize services
model_service = ModelService()
oracle_service = OracleService(model_service)
noisy_sim_service = NoisySimService()


class Pipeline:
    def __init__(self, experiment: ExperimentConfig):
        """
        Initialize a run of one experiment configuration

        Args:
            experiment: Validated configuration
        """
        self.experiment = experiment
        self.params = experiment.model
        self.circuit_service = CircuitService(model_service, t_connectivity=experiment.t_connectivity)
        self.estimation_service = EstimationService(model_service, oracle_service, self.circuit_service,
                                                    noisy_sim_service)
        self.spectral_service = SpectralService(oracle_service, self.estimation_service)
        self.output = OutputService(experiment.output_dir, experiment.config_hash())

    def run(self):
        handlers = {
            "correlator": self.run_correlator,
            "counts": self.run_counts,
            "budget": self.run_budget,
            "spectrum": self.run_spectrum,
            "euclidean": self.run_euclidean,
        }
        handlers[self.experiment.mode]()

    def initial_state(self) -> np.ndarray:
        eigs = oracle_service.diagonalize(model_service.build_qubit_hamiltonian(self.params))
        if self.experiment.fidelity >= 1.0:
            return eigs.ground_state
        contaminated = oracle_service.make_contaminated_state(
            eigs, self.experiment.fidelity, derive_seed(self.experiment.seed, "initial_state"))
        return contaminated.vector(eigs)

    def run_correlator(self):
        experiment = self.experiment
        taus = experiment.grid.taus
        state = self.initial_state()
        noise = experiment.noise.to_noise_model()
        for q in experiment.q_list:
            excitation = model_service.build_excitation(q, self.params)
            exact = self.estimation_service.exact_series(q, taus, self.params, state)
            for ordering in experiment.orderings:
                trotter = self.estimation_service.trotter_series(q, ordering, taus, self.params, state,
                                                                 experiment.steps)
                bare, mitigated = self.estimation_service.estimate_correlator(
                    q, ordering, taus, self.params, shots_per_point=experiment.shots, noise=noise,
                    mitigation_config=experiment.mitigation, init_state=state,
                    seed=derive_seed(experiment.seed, q.tag, ordering.value), steps=experiment.steps,
                )
                stem = f"correlator_q{q.tag}_{ordering.value}"
                for series in (bare, mitigated, trotter, exact):
                    self.output.write_csv(f"{stem}_{series.variant}.csv", series.to_frame())

                bounds = [
                    deviation_bound(oracle_service.trotter_error(self.params, ordering, tau, experiment.steps),
                                    experiment.fidelity, excitation)
                    for tau in taus
                ]
                self.output.write_json(f"{stem}_quality.json", {
                    "q": q.tag,
                    "ordering": ordering.value,
                    "reports": self._quality(bare, mitigated, trotter, exact),
                    "deviation_bound": bounds,
                    "max_deviation_exact_trotter": float(np.max(np.abs(trotter.values - exact.values))),
                    "per_scale": mitigated.per_scale,
                })

    def _quality(self, bare, mitigated, trotter, exact) -> dict:
        reports = {}
        for series in (bare, mitigated):
            for reference in (exact, trotter):
                key = f"{series.variant}_vs_{reference.variant}"
                try:
                    reports[key] = quality_metrics(series, reference, self.experiment.relative_error).to_dict()
                except ValueError as error:
                    logger.warning("no quality report for %s q=%s: %s", key, series.q.tag, error)
        return reports

    def run_counts(self):
        tau = float(self.experiment.grid.taus[-1]) or 0.1
        routed = CircuitService(model_service, t_connectivity=True).cnot_table(self.params, tau)
        direct = CircuitService(model_service, t_connectivity=False).cnot_table(self.params, tau)
        frame = pd.DataFrame(routed)
        frame.insert(3, "cnot_count_all_to_all", [row["cnot_count"] for row in direct])
        self.output.write_csv("cnot_counts.csv", frame)
        logger.info("CNOT table: %d of %d entries match the published counts", int(frame["match"].sum()), len(frame))

    def _coefficients(self, q: MomentumVector) -> List[float]:
        return [value.real for _, value in model_service.build_excitation(q, self.params)]

    def run_budget(self):
        epsilon = self.experiment.budget.epsilon
        rows = []
        for q in self.experiment.q_list:
            budget = measurement_budget(epsilon, [self._coefficients(q)])
            rows.append({"q": q.tag, **budget.to_dict()})
        overall = measurement_budget(epsilon, [self._coefficients(q) for q in self.experiment.q_list])
        rows.append({"q": "all", **overall.to_dict()})
        self.output.write_csv("measurement_budget.csv", pd.DataFrame(rows))

    def run_spectrum(self):
        settings = self.experiment.spectrum
        hamiltonian = model_service.build_qubit_hamiltonian(self.params)
        state = self.initial_state()
        n_t, evaluations = resolution_cost(settings.delta_omega, settings.delta)
        ordering = self.experiment.orderings[0]
        omegas = default_omegas(settings.delta, settings.delta_omega)
        for q in self.experiment.q_list:
            excitation = model_service.build_excitation(q, self.params)
            grid = self.spectral_service.two_time_correlator(
                hamiltonian, excitation, state, settings.delta, n_t, settings.source,
                params=self.params, ordering=ordering, q=q, noise=self.experiment.noise.to_noise_model(),
                shots=self.experiment.shots, mitigation_config=self.experiment.mitigation,
                seed=derive_seed(self.experiment.seed, q.tag, "spectrum"), max_step=settings.max_step,
            )
            if grid.evaluations != evaluations:
                raise InvariantViolation(f"grid used {grid.evaluations} evaluations, expected {evaluations}")
            spectrum = riemann_spectrum(grid, omegas)
            stem = f"spectrum_q{q.tag}_{settings.source}"
            self.output.write_csv(f"{stem}.csv", pd.DataFrame({
                "omega": spectrum.omegas,
                "re_S": spectrum.s_values.real,
                "im_S": spectrum.s_values.imag,
            }))
            lines = oracle_service.spectral_response(hamiltonian, excitation, state)
            self.output.write_csv(f"{stem}_lines.csv", pd.DataFrame({
                "omega": [line.omega for line in lines],
                "weight_re": [line.weight.real for line in lines],
                "weight_im": [line.weight.imag for line in lines],
            }))
            self.output.write_grid(f"{stem}_grid.bin", grid.values, {
                "delta": grid.delta, "n_t": grid.n_t, "evaluations": grid.evaluations,
            })

    def run_euclidean(self):
        settings = self.experiment.euclidean
        hamiltonian = model_service.build_qubit_hamiltonian(self.params)
        eigs = oracle_service.diagonalize(hamiltonian)
        tau_grid = np.linspace(0.0, settings.tau_stop, settings.tau_points)
        for q in self.experiment.q_list:
            excitation = model_service.build_excitation(q, self.params)
            rows = oracle_service.contamination_scan(eigs, excitation, settings.amplitudes, settings.level)
            self.output.write_csv(f"euclidean_q{q.tag}_scan.csv", pd.DataFrame(rows))
            curves = {"tau_e": tau_grid}
            curves["exact"] = [
                oracle_service.euclidean_correlator(eigs, excitation, eigs.ground_state, t).real for t in tau_grid
            ]
            level = rows[0]["level"]
            for amplitude in settings.amplitudes:
                state = oracle_service.single_contamination(eigs, level, amplitude).vector(eigs)
                curves[f"c_{amplitude:g}"] = [
                    oracle_service.euclidean_correlator(eigs, excitation, state, t).real for t in tau_grid
                ]
            self.output.write_csv(f"euclidean_q{q.tag}_curves.csv", pd.DataFrame(curves))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=VALUE experiment configuration file")
    common.add_argument("--seed", type=int, help="override SEED")
    common.add_argument("--out", help="override OUTPUT_DIR")
    common.add_argument("--t-connectivity", action="store_true", default=None,
                        help="route controlled Pauli strings through a single ancilla port")

    parser = argparse.ArgumentParser(prog="correlator", description="Two-point correlator simulator")
    commands = parser.add_subparsers(dest="mode", required=True)
    commands.add_parser("correlator", parents=[common], help="bare, mitigated and exact correlator series")
    commands.add_parser("spectrum", parents=[common], help="frequency-domain reconstruction")
    commands.add_parser("budget", parents=[common], help="measurement budget report")
    commands.add_parser("counts", parents=[common], help="CNOT counts per ordering and correlator")
    commands.add_parser("euclidean", parents=[common], help="excited-state contamination scan")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)
    args = build_parser().parse_args(argv)
    overrides = {
        "mode": args.mode,
        "seed": args.seed,
        "output_dir": args.out,
        "t_connectivity": args.t_connectivity,
    }
    try:
        experiment = load_experiment_config(args.config, overrides)
        pipeline = Pipeline(experiment)
        pipeline.run()
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except InvariantViolation as e:
        logger.error("internal invariant violated: %s", e)
        return EXIT_INVARIANT
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return EXIT_IO
    except CorrelatorError as e:
        logger.error("%s", e)
        return EXIT_INVARIANT
    except ValueError as e:
        logger.error("rejected input: %s", e)
        return EXIT_CONFIG
    logger.info("%s run finished: %d artifacts in %s", experiment.mode, len(pipeline.output.written),
                experiment.output_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
