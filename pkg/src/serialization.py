"""
serialization.py - Config documents, data dumps and results files

JSON documents describe problems and grids; CSV files hold signal, sensing and
measurement dumps plus phase-grid results. Floats are written with their
shortest round-trip representation so files reproduce byte for byte.
"""

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import (
    CODE_VERSION,
    DEFAULT_SEED,
    JEFFREYS_CONFIDENCE,
    JEFFREYS_TARGET_WIDTH,
    MANIFEST_NAME,
    MAX_TRIALS,
    MIN_TRIALS,
    PRESETS,
    RESULTS_HEADER,
    RNG_ALGORITHM,
)
from .detect import Algorithm, DetectorConfig
from .errors import AnomalyError, ConfigError, IoError
from .experiment import CellResult, GridSpec
from .model import (
    GaussianSpec,
    MeasurementSet,
    ProblemSpec,
    ProblemTemplate,
    SensingSequence,
    SignalEnsemble,
    SignalModel,
)
from .utils import format_bool, format_float, load_json_file, parse_bool, save_json_file, write_text_atomic

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SIGNALS_FILE = "signals.csv"
SENSING_FILE = "sensing.csv"
MEASUREMENTS_FILE = "measurements.csv"
PROBLEM_FILE = "problem.json"


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _require(doc: Mapping[str, Any], name: str) -> Any:
    if name not in doc:
        raise ConfigError(f"Missing required field '{name}'", field=name)
    return doc[name]


def _as_int(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"'{name}' must be an integer, got {value!r}", field=name)
    if int(value) < minimum:
        raise ConfigError(f"'{name}' must be >= {minimum}, got {value}", field=name)
    return int(value)


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {value!r}", field=name)
    return float(value)


def _with_preset(doc: Mapping[str, Any], preset: Optional[str]) -> Dict[str, Any]:
    """Fill model and distributions from a named preset; explicit fields win."""
    merged = dict(doc)
    name = preset or merged.pop("preset", None)
    merged.pop("preset", None)
    if name is None:
        return merged
    if name not in PRESETS:
        raise ConfigError(
            f"Unknown preset {name!r} (expected one of: {', '.join(PRESETS)})",
            field="preset",
        )
    values = PRESETS[name]
    merged.setdefault("model", values["model"])
    for part in ("prevalent", "anomalous"):
        mean, var = values[part]
        merged.setdefault(part, {"mean": mean, "var": var})
    return merged


def parse_gaussian(doc: Any, name: str) -> GaussianSpec:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"'{name}' must be an object with mean and var", field=name)
    mean = _as_float(_require(doc, "mean"), f"{name}.mean")
    var = _as_float(_require(doc, "var"), f"{name}.var")
    if not var >= 0:
        raise ConfigError(f"'{name}.var' must be nonnegative, got {var}", field=f"{name}.var")
    return GaussianSpec(mean, var)


def parse_template(doc: Mapping[str, Any]) -> ProblemTemplate:
    model_name = _require(doc, "model")
    return ProblemTemplate(
        n_vars=_as_int(_require(doc, "N"), "N", minimum=2),
        prevalent=parse_gaussian(_require(doc, "prevalent"), "prevalent"),
        anomalous=parse_gaussian(_require(doc, "anomalous"), "anomalous"),
        model=SignalModel.parse(model_name),
    )


def _gaussian_dict(spec: GaussianSpec) -> Dict[str, float]:
    return {"mean": spec.mean, "var": spec.variance}


def template_to_dict(template: ProblemTemplate) -> Dict[str, Any]:
    return {
        "N": template.n_vars,
        "model": template.model.value,
        "prevalent": _gaussian_dict(template.prevalent),
        "anomalous": _gaussian_dict(template.anomalous),
    }


@dataclass(frozen=True)
class ProblemConfig:
    """A problem document: distributions, K, M, T and optionally a fixed anomaly set."""

    template: ProblemTemplate
    n_anomalies: int
    m_per_step: int
    n_steps: int
    anomaly_set: Optional[Tuple[int, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        doc = template_to_dict(self.template)
        doc.update(K=self.n_anomalies, M=self.m_per_step, T=self.n_steps)
        if self.anomaly_set is not None:
            doc["anomaly_set"] = list(self.anomaly_set)
        return doc


def parse_problem_config(doc: Any, preset: Optional[str] = None) -> ProblemConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("Problem config must be a JSON object")
    doc = _with_preset(doc, preset)
    template = parse_template(doc)
    n_anomalies = _as_int(_require(doc, "K"), "K")
    if n_anomalies >= template.n_vars:
        raise ConfigError(f"K must be below N={template.n_vars}", field="K")

    anomaly_set = None
    if doc.get("anomaly_set") is not None:
        raw = doc["anomaly_set"]
        if not isinstance(raw, list):
            raise ConfigError("'anomaly_set' must be a list of indices", field="anomaly_set")
        anomaly_set = tuple(sorted(_as_int(i, "anomaly_set") for i in raw))
        try:
            template.instantiate(anomaly_set)
        except AnomalyError as e:
            raise ConfigError(e.message, field="anomaly_set")
        if len(anomaly_set) != n_anomalies:
            raise ConfigError(f"'anomaly_set' must hold K={n_anomalies} indices", field="anomaly_set")

    return ProblemConfig(
        template=template,
        n_anomalies=n_anomalies,
        m_per_step=_as_int(_require(doc, "M"), "M"),
        n_steps=_as_int(_require(doc, "T"), "T"),
        anomaly_set=anomaly_set,
    )


def load_problem_config(path: PathLike, preset: Optional[str] = None) -> ProblemConfig:
    return parse_problem_config(load_json_file(path), preset)


def spec_to_dict(spec: ProblemSpec) -> Dict[str, Any]:
    doc = template_to_dict(spec.template)
    doc.update(K=spec.n_anomalies, anomaly_set=list(spec.anomaly_set))
    return doc


def parse_spec(doc: Mapping[str, Any]) -> ProblemSpec:
    template = parse_template(doc)
    raw = _require(doc, "anomaly_set")
    try:
        return template.instantiate(int(i) for i in raw)
    except AnomalyError as e:
        raise ConfigError(e.message, field="anomaly_set")


def _grid_values(doc: Mapping[str, Any], name: str) -> Tuple[int, ...]:
    raw = _require(doc, name)
    if isinstance(raw, Mapping):
        start = _as_int(_require(raw, "start"), f"{name}.start")
        stop = _as_int(_require(raw, "stop"), f"{name}.stop")
        step = _as_int(raw.get("step", 1), f"{name}.step")
        if stop < start:
            raise ConfigError(f"'{name}' range is empty", field=name)
        return tuple(range(start, stop + 1, step))
    if isinstance(raw, list) and raw:
        return tuple(_as_int(v, name) for v in raw)
    raise ConfigError(f"'{name}' must be a nonempty list or a start/stop/step range", field=name)


def parse_detector_config(doc: Mapping[str, Any], algorithm: Optional[str] = None) -> DetectorConfig:
    name = algorithm or _require(doc, "algorithm")
    kwargs: Dict[str, Any] = {"algorithm": Algorithm.parse(name)}
    if doc.get("inner") is not None:
        kwargs["inner"] = Algorithm.parse(doc["inner"], field_name="inner")
    if doc.get("L") is not None:
        kwargs["iters"] = _as_int(doc["L"], "L")
    if doc.get("lambda") is not None:
        kwargs["lam"] = _as_float(doc["lambda"], "lambda")
    if doc.get("tol") is not None:
        kwargs["tol"] = _as_float(doc["tol"], "tol")
    if doc.get("max_iters") is not None:
        kwargs["max_iters"] = _as_int(doc["max_iters"], "max_iters")
    for flag in ("acceleration", "reestimate"):
        if doc.get(flag) is not None:
            if not isinstance(doc[flag], bool):
                raise ConfigError(f"'{flag}' must be true or false", field=flag)
            kwargs[flag] = doc[flag]
    return DetectorConfig(**kwargs)


def parse_grid_config(
    doc: Any,
    preset: Optional[str] = None,
    algorithm: Optional[str] = None,
    base_seed: Optional[int] = None,
) -> GridSpec:
    """Build a GridSpec from a grid document (or a manifest that echoes one)."""
    if not isinstance(doc, Mapping):
        raise ConfigError("Grid config must be a JSON object")
    if "config" in doc and "command" in doc:
        doc = doc["config"]
    doc = _with_preset(doc, preset)

    seed = base_seed if base_seed is not None else doc.get("base_seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"'base_seed' must be an integer, got {seed!r}", field="base_seed")

    ratios = doc.get("variance_ratios") or ()
    if not isinstance(ratios, (list, tuple)):
        raise ConfigError("'variance_ratios' must be a list", field="variance_ratios")

    return GridSpec(
        template=parse_template(doc),
        m_values=_grid_values(doc, "m_values"),
        t_values=_grid_values(doc, "t_values"),
        k_values=_grid_values(doc, "k_values"),
        detector=parse_detector_config(doc, algorithm),
        confidence=_as_float(doc.get("confidence", JEFFREYS_CONFIDENCE), "confidence"),
        target_width=_as_float(doc.get("target_width", JEFFREYS_TARGET_WIDTH), "target_width"),
        min_trials=_as_int(doc.get("min_trials", MIN_TRIALS), "min_trials"),
        max_trials=_as_int(doc.get("max_trials", MAX_TRIALS), "max_trials"),
        base_seed=seed,
        variance_ratios=tuple(_as_float(r, "variance_ratios") for r in ratios),
    )


def load_grid_config(
    path: PathLike,
    preset: Optional[str] = None,
    algorithm: Optional[str] = None,
    base_seed: Optional[int] = None,
) -> GridSpec:
    return parse_grid_config(load_json_file(path), preset, algorithm, base_seed)


def grid_to_dict(grid: GridSpec) -> Dict[str, Any]:
    doc = template_to_dict(grid.template)
    doc.update(grid.detector.to_dict())
    doc.update(
        m_values=list(grid.m_values),
        t_values=list(grid.t_values),
        k_values=list(grid.k_values),
        confidence=grid.confidence,
        target_width=grid.target_width,
        min_trials=grid.min_trials,
        max_trials=grid.max_trials,
        base_seed=grid.base_seed,
    )
    if grid.variance_ratios:
        doc["variance_ratios"] = list(grid.variance_ratios)
    return {key: value for key, value in doc.items() if value is not None}


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    filepath = Path(path)
    try:
        with open(filepath, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoError(f"Cannot read CSV file: {e}", str(filepath))
    if not rows:
        raise IoError("CSV file is empty", str(filepath))
    return rows[0], rows[1:]


def _floats(cells: Sequence[str], path: PathLike) -> List[float]:
    try:
        return [float(c) for c in cells]
    except ValueError as e:
        raise IoError(f"Malformed number: {e}", str(path))


def write_signals_csv(path: PathLike, signals: SignalEnsemble) -> None:
    """N rows, one column per time-step."""
    header = [f"t{t + 1}" for t in range(signals.n_steps)]
    rows = [[format_float(v) for v in row] for row in signals.values]
    write_text_atomic(path, _csv_text(header, rows))


def read_signals_csv(path: PathLike) -> np.ndarray:
    _, rows = _read_csv(path)
    return np.array([_floats(row, path) for row in rows])


def write_sensing_csv(path: PathLike, sensing: SensingSequence) -> None:
    """One row per (t, m) holding row m of phi_t, time-major."""
    header = ["t", "m"] + [f"phi{n + 1}" for n in range(sensing.n_vars)]
    rows = [
        [str(t + 1), str(m + 1)] + [format_float(v) for v in sensing.matrices[t, m]]
        for t in range(sensing.n_steps)
        for m in range(sensing.m_per_step)
    ]
    write_text_atomic(path, _csv_text(header, rows))


def read_sensing_csv(path: PathLike) -> SensingSequence:
    header, rows = _read_csv(path)
    n_vars = len(header) - 2
    if n_vars < 1 or not rows:
        raise IoError("Sensing file has no matrix entries", str(path))
    try:
        coords = [(int(row[0]), int(row[1])) for row in rows]
    except (ValueError, IndexError) as e:
        raise IoError(f"Malformed sensing row: {e}", str(path))
    n_steps = max(t for t, _ in coords)
    m_per_step = max(m for _, m in coords)
    if len(rows) != n_steps * m_per_step:
        raise IoError(
            f"Expected {n_steps * m_per_step} sensing rows, found {len(rows)}", str(path)
        )
    matrices = np.zeros((n_steps, m_per_step, n_vars))
    for (t, m), row in zip(coords, rows):
        if len(row) != n_vars + 2:
            raise IoError(f"Sensing row ({t}, {m}) has {len(row) - 2} entries", str(path))
        matrices[t - 1, m - 1] = _floats(row[2:], path)
    return SensingSequence(matrices)


def write_measurements_csv(path: PathLike, measurements: MeasurementSet) -> None:
    header = ["t"] + [f"y{m + 1}" for m in range(measurements.m_per_step)]
    rows = [
        [str(t + 1)] + [format_float(v) for v in measurements.vectors[t]]
        for t in range(measurements.n_steps)
    ]
    write_text_atomic(path, _csv_text(header, rows))


def read_measurements_csv(path: PathLike) -> MeasurementSet:
    _, rows = _read_csv(path)
    if not rows:
        raise IoError("Measurement file has no rows", str(path))
    vectors = [_floats(row[1:], path) for row in rows]
    if len({len(v) for v in vectors}) != 1:
        raise IoError("Measurement rows have different lengths", str(path))
    return MeasurementSet(np.array(vectors))


@dataclass(frozen=True, eq=False)
class DataBundle:
    """Files written by ``generate`` and read back by ``detect``."""

    sensing: SensingSequence
    measurements: MeasurementSet
    spec: Optional[ProblemSpec] = None


def write_bundle(
    directory: PathLike,
    spec: ProblemSpec,
    signals: SignalEnsemble,
    sensing: SensingSequence,
    measurements: MeasurementSet,
) -> List[Path]:
    directory = Path(directory)
    paths = [
        directory / SIGNALS_FILE,
        directory / SENSING_FILE,
        directory / MEASUREMENTS_FILE,
        directory / PROBLEM_FILE,
    ]
    write_signals_csv(paths[0], signals)
    write_sensing_csv(paths[1], sensing)
    write_measurements_csv(paths[2], measurements)
    save_json_file(paths[3], spec_to_dict(spec))
    return paths


def read_bundle(directory: PathLike) -> DataBundle:
    directory = Path(directory)
    spec = None
    problem_path = directory / PROBLEM_FILE
    if problem_path.exists():
        spec = parse_spec(load_json_file(problem_path))
    return DataBundle(
        sensing=read_sensing_csv(directory / SENSING_FILE),
        measurements=read_measurements_csv(directory / MEASUREMENTS_FILE),
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Results and manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    """One line of a results CSV."""

    algorithm: str
    model: str
    N: int
    K: int
    M: int
    T: int
    successes: int
    trials: int
    rate: float
    ci_low: float
    ci_high: float
    hit_max_trials: bool
    seed: int

    @classmethod
    def from_cell(cls, grid: GridSpec, cell: CellResult) -> "ResultRow":
        return cls(
            algorithm=grid.detector.algorithm.value,
            model=grid.template.model.value,
            N=grid.template.n_vars,
            K=cell.k,
            M=cell.m,
            T=cell.t,
            successes=cell.successes,
            trials=cell.trials,
            rate=cell.rate,
            ci_low=cell.ci_low,
            ci_high=cell.ci_high,
            hit_max_trials=cell.hit_max_trials,
            seed=grid.base_seed,
        )

    def to_cell(self) -> CellResult:
        return CellResult(
            m=self.M,
            t=self.T,
            k=self.K,
            successes=self.successes,
            trials=self.trials,
            rate=self.rate,
            ci_low=self.ci_low,
            ci_high=self.ci_high,
            hit_max_trials=self.hit_max_trials,
        )

    def to_fields(self) -> List[str]:
        return [
            self.algorithm,
            self.model,
            str(self.N),
            str(self.K),
            str(self.M),
            str(self.T),
            str(self.successes),
            str(self.trials),
            format_float(self.rate),
            format_float(self.ci_low),
            format_float(self.ci_high),
            format_bool(self.hit_max_trials),
            str(self.seed),
        ]

    @classmethod
    def from_fields(cls, fields: Sequence[str]) -> "ResultRow":
        if len(fields) != len(RESULTS_HEADER):
            raise ValueError(f"expected {len(RESULTS_HEADER)} columns, got {len(fields)}")
        return cls(
            algorithm=fields[0],
            model=fields[1],
            N=int(fields[2]),
            K=int(fields[3]),
            M=int(fields[4]),
            T=int(fields[5]),
            successes=int(fields[6]),
            trials=int(fields[7]),
            rate=float(fields[8]),
            ci_low=float(fields[9]),
            ci_high=float(fields[10]),
            hit_max_trials=parse_bool(fields[11]),
            seed=int(fields[12]),
        )


def results_csv_text(rows: Sequence[ResultRow]) -> str:
    return _csv_text(RESULTS_HEADER, [row.to_fields() for row in rows])


def write_results_csv(path: PathLike, grid: GridSpec, cells: Sequence[CellResult]) -> None:
    write_results_rows(path, [ResultRow.from_cell(grid, cell) for cell in cells])


def write_results_rows(path: PathLike, rows: Sequence[ResultRow]) -> None:
    write_text_atomic(path, results_csv_text(rows))
    logger.debug(f"Wrote {len(rows)} result rows to {path}")


def read_results_csv(path: PathLike) -> List[ResultRow]:
    header, rows = _read_csv(path)
    if tuple(header) != RESULTS_HEADER:
        raise IoError(f"Unexpected results header: {','.join(header)}", str(path))
    try:
        return [ResultRow.from_fields(row) for row in rows]
    except ValueError as e:
        raise IoError(f"Malformed results row: {e}", str(path))


def results_filename(grid: GridSpec, k: int, ratio: Optional[float] = None) -> str:
    stem = f"{grid.detector.algorithm.value}_{grid.template.model.value}_K{k}"
    if ratio is not None:
        stem += f"_r{ratio:g}"
    return stem


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Sidecar written next to every command's outputs."""

    command: str
    config: Dict[str, Any]
    base_seed: int
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    complete: bool = False
    code_version: str = CODE_VERSION
    rng_algorithm: str = RNG_ALGORITHM

    def finish(self, complete: bool = True) -> None:
        self.finished_at = _now()
        self.complete = complete

    def write(self, directory: PathLike) -> Path:
        path = Path(directory) / MANIFEST_NAME
        save_json_file(path, asdict(self))
        return path


def read_manifest(directory: PathLike) -> Optional[RunManifest]:
    doc = load_json_file(Path(directory) / MANIFEST_NAME, None)
    if doc is None:
        return None
    try:
        return RunManifest(**doc)
    except TypeError as e:
        raise IoError(f"Malformed manifest: {e}", str(Path(directory) / MANIFEST_NAME))
