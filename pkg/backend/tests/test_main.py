import json

import numpy as np
import pandas as pd
import pytest

from main import EXIT_CONFIG, EXIT_IO, EXIT_OK, Pipeline, build_parser, main


def write_config(tmp_path, text):
    path = tmp_path / "experiment.env"
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path) as handle:
        header = handle.readline()
    assert header.startswith("# config_hash=")
    return pd.read_csv(path, comment="#", dtype={"q": str})


def test_parser_requires_a_mode():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_budget_mode(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(tmp_path, "Q_LIST=01\nBUDGET_EPSILON=0.01\n")
    assert main(["budget", "--config", config_path, "--out", str(out)]) == EXIT_OK
    frame = read_csv(out / "measurement_budget.csv")
    assert list(frame["q"]) == ["01", "all"]
    assert list(frame["total_measurements"]) == [160_000, 160_000]


def test_unknown_key_exits_with_config_code(tmp_path):
    config_path = write_config(tmp_path, "UNKNOWN_KEY=1\n")
    assert main(["budget", "--config", config_path, "--out", str(tmp_path)]) == EXIT_CONFIG == 2


def test_missing_config_exits_with_io_code(tmp_path):
    assert main(["budget", "--config", str(tmp_path / "absent.env")]) == EXIT_IO == 4


def test_out_of_range_level_exits_with_config_code(tmp_path):
    config_path = write_config(tmp_path, "EUCLIDEAN_LEVEL=20\n")
    assert main(["euclidean", "--config", config_path, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_service_precondition_exits_with_config_code(tmp_path, monkeypatch):
    def reject(self):
        raise ValueError("epsilon must be positive")

    monkeypatch.setattr(Pipeline, "run_budget", reject)
    assert main(["budget", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_seed_flag_changes_the_hash(tmp_path):
    config_path = write_config(tmp_path, "SEED=1\n")
    main(["budget", "--config", config_path, "--out", str(tmp_path / "a")])
    main(["budget", "--config", config_path, "--out", str(tmp_path / "b"), "--seed", "2"])
    first = (tmp_path / "a" / "measurement_budget.csv").read_text().splitlines()[0]
    second = (tmp_path / "b" / "measurement_budget.csv").read_text().splitlines()[0]
    assert first != second


def test_out_flag_keeps_the_hash(tmp_path):
    config_path = write_config(tmp_path, "SEED=1\n")
    main(["budget", "--config", config_path, "--out", str(tmp_path / "a")])
    main(["budget", "--config", config_path, "--out", str(tmp_path / "b")])
    first = (tmp_path / "a" / "measurement_budget.csv").read_text().splitlines()[0]
    second = (tmp_path / "b" / "measurement_budget.csv").read_text().splitlines()[0]
    assert first == second


def test_counts_mode(tmp_path):
    out = tmp_path / "out"
    assert main(["counts", "--out", str(out)]) == EXIT_OK
    frame = read_csv(out / "cnot_counts.csv")
    assert len(frame) == 16
    assert frame["match"].dtype == bool
    assert set(frame["ordering"]) == {"A1", "A2", "B1", "B2"}
    assert (frame["cnot_count_all_to_all"] <= frame["cnot_count"]).all()


def test_correlator_mode(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(tmp_path, "\n".join([
        "ORDERINGS=A2",
        "GRID_STOP=0.2",
        "GRID_POINTS=2",
        "NOISE_ENABLED=false",
        "SHOTS=200",
        "",
    ]))
    assert main(["correlator", "--config", config_path, "--out", str(out)]) == EXIT_OK
    for variant in ("bare", "mitigated", "exact_trotter", "exact"):
        frame = read_csv(out / f"correlator_q01_A2_{variant}.csv")
        assert list(frame["tau"]) == pytest.approx([0.0, 0.2])
    exact = read_csv(out / "correlator_q01_A2_exact.csv")
    trotter = read_csv(out / "correlator_q01_A2_exact_trotter.csv")
    assert exact["re"].iloc[0] == pytest.approx(trotter["re"].iloc[0])

    quality = json.loads((out / "correlator_q01_A2_quality.json").read_text())
    assert quality["ordering"] == "A2"
    assert len(quality["deviation_bound"]) == 2
    assert quality["max_deviation_exact_trotter"] <= max(quality["deviation_bound"]) + 1e-10


def test_spectrum_mode(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(tmp_path, "SPECTRUM_SOURCE=exact\nSPECTRUM_DELTA=0.2\nSPECTRUM_DELTA_OMEGA=0.5\n")
    assert main(["spectrum", "--config", config_path, "--out", str(out)]) == EXIT_OK
    spectrum = read_csv(out / "spectrum_q01_exact.csv")
    assert {"omega", "re_S", "im_S"} <= set(spectrum.columns)
    metadata = json.loads((out / "spectrum_q01_exact_grid.bin.json").read_text())
    assert metadata["shape"] == [21, 21]
    assert metadata["evaluations"] == 441
    grid = np.fromfile(out / "spectrum_q01_exact_grid.bin", dtype="<c16")
    assert grid.size == 441


def test_euclidean_mode(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(tmp_path, "EUCLIDEAN_AMPLITUDES=0.001,0.01\nEUCLIDEAN_TAU_POINTS=3\n")
    assert main(["euclidean", "--config", config_path, "--out", str(out)]) == EXIT_OK
    scan = read_csv(out / "euclidean_q01_scan.csv")
    assert len(scan) == 2
    curves = read_csv(out / "euclidean_q01_curves.csv")
    assert list(curves.columns) == ["tau_e", "exact", "c_0.001", "c_0.01"]
    assert len(curves) == 3


@pytest.mark.slow
def test_mitigation_and_ordering_ranking(tmp_path):
    out = tmp_path / "out"
    config_path = write_config(tmp_path, "Q_LIST=01\n")
    assert main(["correlator", "--config", config_path, "--out", str(out)]) == EXIT_OK
    reports = {
        ordering: json.loads((out / f"correlator_q01_{ordering}_quality.json").read_text())["reports"]
        for ordering in ("A1", "A2", "B1", "B2")
    }

    def total(ordering, key, metric):
        return sum(reports[ordering][key][metric].values())

    for ordering in ("A2", "B2"):
        for metric in ("chi2", "nssd"):
            for part in ("re", "im"):
                mitigated = reports[ordering]["mitigated_vs_exact_trotter"][metric][part]
                assert mitigated < reports[ordering]["bare_vs_exact_trotter"][metric][part]

    # Trotter error separates the orderings against the exact curve, gate noise against the product formula
    against_exact = {o: total(o, "mitigated_vs_exact", "nssd") for o in reports}
    assert max(against_exact["A2"], against_exact["B2"]) < min(against_exact["A1"], against_exact["B1"])
    against_trotter = {o: total(o, "mitigated_vs_exact_trotter", "nssd") for o in reports}
    assert max(against_trotter, key=against_trotter.get) == "B1"
