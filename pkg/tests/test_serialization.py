import json
from pathlib import Path

import numpy as np
import pytest

from src.config import MANIFEST_NAME, RESULTS_HEADER
from src.detect import Algorithm
from src.errors import ConfigError, IoError
from src.experiment import CellResult
from src.model import GaussianSpec, SeededRng, SignalModel, draw_sensing, generate, measure
from src.serialization import (
    ResultRow,
    RunManifest,
    grid_to_dict,
    load_problem_config,
    parse_grid_config,
    parse_problem_config,
    parse_spec,
    read_bundle,
    read_manifest,
    read_measurements_csv,
    read_results_csv,
    read_sensing_csv,
    read_signals_csv,
    results_filename,
    spec_to_dict,
    write_bundle,
    write_measurements_csv,
    write_results_csv,
    write_results_rows,
    write_sensing_csv,
    write_signals_csv,
)

PROBLEM = {
    "N": 20,
    "K": 2,
    "model": "jsm2r",
    "prevalent": {"mean": 0.0, "var": 1.0},
    "anomalous": {"mean": 7.0, "var": 1.0},
    "M": 5,
    "T": 4,
}

GRID = {
    "N": 20,
    "model": "jsm3r",
    "prevalent": {"mean": 7.0, "var": 1.0},
    "anomalous": {"mean": 0.0, "var": 10.0},
    "m_values": {"start": 2, "stop": 10, "step": 4},
    "t_values": [1, 3],
    "k_values": [1, 2],
    "algorithm": "acie",
    "inner": "somp",
    "L": 3,
    "max_trials": 50,
    "base_seed": 11,
}


def with_fields(base, **changes):
    doc = dict(base)
    for key, value in changes.items():
        if value is None:
            doc.pop(key, None)
        else:
            doc[key] = value
    return doc


# Problem documents


def test_parse_problem_config():
    config = parse_problem_config(PROBLEM)
    assert config.template.n_vars == 20
    assert config.template.model is SignalModel.JSM2R
    assert config.template.anomalous == GaussianSpec(7.0, 1.0)
    assert (config.n_anomalies, config.m_per_step, config.n_steps) == (2, 5, 4)
    assert config.anomaly_set is None


def test_problem_config_with_fixed_set():
    config = parse_problem_config(with_fields(PROBLEM, anomaly_set=[9, 3]))
    assert config.anomaly_set == (3, 9)
    assert parse_problem_config(config.to_dict()) == config


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"model": "jsm4r"}, "model"),
        ({"N": None}, "N"),
        ({"K": 20}, "K"),
        ({"M": 0}, "M"),
        ({"T": 2.5}, "T"),
        ({"prevalent": {"mean": 0.0, "var": -1.0}}, "prevalent.var"),
        ({"anomalous": {"mean": 7.0}}, "var"),
        ({"anomaly_set": [1, 21]}, "anomaly_set"),
        ({"anomaly_set": [1, 2, 3]}, "anomaly_set"),
    ],
)
def test_problem_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError) as excinfo:
        parse_problem_config(with_fields(PROBLEM, **changes))
    assert excinfo.value.field == field
    assert excinfo.value.code == 1


def test_problem_config_must_be_an_object():
    with pytest.raises(ConfigError):
        parse_problem_config([1, 2, 3])


def test_presets_fill_distributions():
    doc = {"N": 100, "K": 5, "M": 10, "T": 10, "preset": "jsm3r"}
    config = parse_problem_config(doc)
    assert config.template.model is SignalModel.JSM3R
    assert config.template.prevalent == GaussianSpec(7.0, 1.0)
    assert config.template.anomalous == GaussianSpec(0.0, 10.0)


def test_explicit_fields_override_preset():
    doc = {"N": 100, "K": 5, "M": 10, "T": 10, "anomalous": {"mean": 7.0, "var": 10.0}}
    config = parse_problem_config(doc, preset="jsm3r")
    assert config.template.anomalous == GaussianSpec(7.0, 10.0)
    assert config.template.prevalent == GaussianSpec(7.0, 1.0)


def test_unknown_preset():
    with pytest.raises(ConfigError) as excinfo:
        parse_problem_config(PROBLEM, preset="jsm9")
    assert excinfo.value.field == "preset"


def test_load_problem_config_missing_file(tmp_path):
    with pytest.raises(IoError) as excinfo:
        load_problem_config(tmp_path / "absent.json")
    assert excinfo.value.code == 3


def test_load_problem_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(IoError):
        load_problem_config(path)


def test_spec_document_round_trip(jsm3r_spec):
    assert parse_spec(spec_to_dict(jsm3r_spec)) == jsm3r_spec


# Grid documents


def test_parse_grid_config():
    grid = parse_grid_config(GRID)
    assert grid.m_values == (2, 6, 10)
    assert grid.t_values == (1, 3)
    assert grid.k_values == (1, 2)
    assert grid.detector.algorithm is Algorithm.ACIE
    assert grid.detector.inner is Algorithm.SOMP
    assert grid.detector.iters == 3
    assert grid.max_trials == 50
    assert grid.base_seed == 11
    assert grid.confidence == 0.95


def test_grid_overrides_from_flags():
    grid = parse_grid_config(GRID, algorithm="tecc", base_seed=5)
    assert grid.detector.algorithm is Algorithm.TECC
    assert grid.base_seed == 5


def test_grid_document_round_trip():
    grid = parse_grid_config(with_fields(GRID, variance_ratios=[2, 5], **{"lambda": 0.5}))
    again = parse_grid_config(json.loads(json.dumps(grid_to_dict(grid))))
    assert again == grid
    assert again.variance_ratios == (2.0, 5.0)


def test_grid_reads_manifest_documents():
    grid = parse_grid_config(GRID)
    manifest = {"command": "phase", "config": grid_to_dict(grid), "base_seed": 11}
    assert parse_grid_config(manifest) == grid


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"m_values": []}, "m_values"),
        ({"t_values": {"start": 5, "stop": 2}}, "t_values"),
        ({"algorithm": "omp"}, "algorithm"),
        ({"inner": "tecc"}, "inner"),
        ({"L": 0}, "L"),
        ({"reestimate": "yes"}, "reestimate"),
        ({"base_seed": "seven"}, "base_seed"),
        ({"k_values": [1, 20]}, "k_values"),
    ],
)
def test_grid_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError) as excinfo:
        parse_grid_config(with_fields(GRID, **changes))
    assert excinfo.value.field == field


# CSV dumps


@pytest.fixture
def bundle(jsm3r_spec):
    rng = SeededRng(3)
    signals = generate(jsm3r_spec, 4, rng)
    sensing = draw_sensing(5, 20, 4, rng)
    return signals, sensing, measure(sensing, signals)


def test_signal_dump_layout(tmp_path, bundle):
    signals, _, _ = bundle
    path = tmp_path / "signals.csv"
    write_signals_csv(path, signals)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t1,t2,t3,t4"
    assert len(lines) == 21
    np.testing.assert_array_equal(read_signals_csv(path), signals.values)


def test_sensing_dump_layout(tmp_path, bundle):
    _, sensing, _ = bundle
    path = tmp_path / "sensing.csv"
    write_sensing_csv(path, sensing)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("t,m,phi1,phi2")
    assert lines[1].startswith("1,1,")
    assert lines[6].startswith("2,1,")
    assert len(lines) == 1 + 4 * 5
    np.testing.assert_array_equal(read_sensing_csv(path).matrices, sensing.matrices)


def test_measurement_dump_round_trip(tmp_path, bundle):
    _, _, measurements = bundle
    path = tmp_path / "measurements.csv"
    write_measurements_csv(path, measurements)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "t,y1,y2,y3,y4,y5"
    np.testing.assert_array_equal(read_measurements_csv(path).vectors, measurements.vectors)


def test_bundle_round_trip(tmp_path, bundle, jsm3r_spec):
    signals, sensing, measurements = bundle
    paths = write_bundle(tmp_path, jsm3r_spec, signals, sensing, measurements)
    assert [p.name for p in paths] == ["signals.csv", "sensing.csv", "measurements.csv", "problem.json"]
    loaded = read_bundle(tmp_path)
    assert loaded.spec == jsm3r_spec
    np.testing.assert_array_equal(loaded.sensing.matrices, sensing.matrices)
    np.testing.assert_array_equal(loaded.measurements.vectors, measurements.vectors)


def test_read_bundle_missing_files(tmp_path):
    with pytest.raises(IoError):
        read_bundle(tmp_path)


def test_truncated_sensing_dump(tmp_path, bundle):
    _, sensing, _ = bundle
    path = tmp_path / "sensing.csv"
    write_sensing_csv(path, sensing)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(IoError):
        read_sensing_csv(path)


# Results files


def sample_grid():
    return parse_grid_config(
        with_fields(GRID, m_values=[2, 4], t_values=[1], k_values=[1], algorithm="osga")
    )


def sample_cells():
    return [
        CellResult(2, 1, 1, 3, 24, 0.125, 0.03758361254098234, 0.30165617706371545, False),
        CellResult(4, 1, 1, 50, 50, 1.0, 0.9512232357891037, 1.0, True, errors=2),
    ]


def test_results_csv_round_trip(tmp_path):
    grid = sample_grid()
    path = tmp_path / "osga_jsm3r_K1.csv"
    write_results_csv(path, grid, sample_cells())
    text = path.read_bytes()

    rows = read_results_csv(path)
    assert [row.to_cell() for row in rows] == [
        CellResult(c.m, c.t, c.k, c.successes, c.trials, c.rate, c.ci_low, c.ci_high, c.hit_max_trials)
        for c in sample_cells()
    ]
    rewritten = tmp_path / "again.csv"
    write_results_rows(rewritten, rows)
    assert rewritten.read_bytes() == text


def test_results_csv_columns(tmp_path):
    path = tmp_path / "results.csv"
    write_results_csv(path, sample_grid(), sample_cells())
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(RESULTS_HEADER)
    assert lines[1].split(",")[:8] == ["osga", "jsm3r", "20", "1", "2", "1", "3", "24"]
    assert lines[2].split(",")[11:] == ["true", "11"]


def test_results_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(IoError):
        read_results_csv(path)


def test_results_csv_rejects_malformed_row(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text(",".join(RESULTS_HEADER) + "\nosga,jsm2r,20\n", encoding="utf-8")
    with pytest.raises(IoError):
        read_results_csv(path)


def test_result_row_from_cell():
    row = ResultRow.from_cell(sample_grid(), sample_cells()[0])
    assert (row.algorithm, row.model, row.N, row.seed) == ("osga", "jsm3r", 20, 11)


def test_results_filename():
    grid = sample_grid()
    assert results_filename(grid, 5) == "osga_jsm3r_K5"
    assert results_filename(grid, 5, 2.0) == "osga_jsm3r_K5_r2"
    assert results_filename(grid, 1, 0.5) == "osga_jsm3r_K1_r0.5"


# Manifests


def test_manifest_write_and_read(tmp_path):
    manifest = RunManifest(command="phase", config={"N": 20}, base_seed=4)
    manifest.outputs.append("osga_jsm2r_K1.csv")
    manifest.finish()
    path = manifest.write(tmp_path)
    assert path.name == MANIFEST_NAME

    loaded = read_manifest(tmp_path)
    assert loaded == manifest
    assert loaded.complete
    assert loaded.rng_algorithm.startswith("numpy.PCG64")


def test_read_manifest_absent(tmp_path):
    assert read_manifest(tmp_path) is None


def test_read_manifest_malformed(tmp_path):
    (tmp_path / MANIFEST_NAME).write_text('{"unexpected": 1}', encoding="utf-8")
    with pytest.raises(IoError):
        read_manifest(tmp_path)



DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.mark.parametrize("path", sorted(DATA_DIR.glob("problem_*.json")), ids=lambda p: p.name)
def test_shipped_problem_configs_parse(path):
    config = load_problem_config(path)
    assert config.n_anomalies < config.template.n_vars


@pytest.mark.parametrize("path", sorted(DATA_DIR.glob("grid_*.json")), ids=lambda p: p.name)
def test_shipped_grid_configs_parse(path):
    grid = parse_grid_config(json.loads(path.read_text(encoding="utf-8")))
    assert grid.template.n_vars == 100
    assert grid.cells()
