"""
actions.py - Action handlers for the command line

Each action wraps one library workflow: generating data, running a detector,
sweeping a phase grid, or evaluating the closed-form oracles.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

from src.detect import Algorithm, DetectorConfig, estimate_k
from src.errors import AllZeroSolution, ConfigError, DegenerateScores, DetectionError
from src.experiment import (
    Case,
    CellKey,
    CellResult,
    GridSpec,
    TheoryCase,
    run_grid,
    theory_separation_check,
    theory_xi_difference,
    theory_xi_expectation,
    with_variance_ratio,
)
from src.model import SeededRng, SignalModel, draw_sensing, generate, measure, sample_anomaly_set
from src.plotting import phase_matrix, render_gap_plot, render_phase_heatmap
from src.serialization import (
    ProblemConfig,
    RunManifest,
    grid_to_dict,
    load_grid_config,
    load_problem_config,
    read_bundle,
    read_results_csv,
    results_filename,
    write_bundle,
    write_results_csv,
)
from src.utils import format_float

from .errors import ErrorContext
from .output import (
    Colors,
    debug_print,
    format_indices,
    format_vector,
    print_message,
    print_section,
    print_success,
    print_warning,
)

logger = logging.getLogger(__name__)


def _draw_problem(config: ProblemConfig, seed: int):
    """Spec, signals, sensing and measurements for one seeded problem."""
    rng = SeededRng(seed)
    anomaly_set = config.anomaly_set or sample_anomaly_set(
        config.template.n_vars, config.n_anomalies, rng
    )
    spec = config.template.instantiate(anomaly_set)
    signals = generate(spec, config.n_steps, rng)
    sensing = draw_sensing(config.m_per_step, spec.n_vars, config.n_steps, rng)
    return spec, signals, sensing, measure(sensing, signals)


def action_generate(
    config_path: str,
    output_dir: str,
    seed: int,
    preset: Optional[str] = None,
) -> List[Path]:
    """Write signals, sensing and measurement dumps for one problem"""
    debug_print(f"Generating from {config_path} with seed {seed}")

    with ErrorContext("Generate"):
        config = load_problem_config(config_path, preset)
        manifest = RunManifest(command="generate", config=config.to_dict(), base_seed=seed)

        spec, signals, sensing, measurements = _draw_problem(config, seed)
        paths = write_bundle(output_dir, spec, signals, sensing, measurements)

        manifest.outputs = [p.name for p in paths]
        manifest.finish()
        manifest.write(output_dir)

        print_message(f"Anomaly set: {format_indices(spec.anomaly_set)}")
        print_success(f"✅ Wrote {len(paths)} files to {output_dir}")
        return paths


def build_detector(
    algorithm: str,
    inner: str = "osga",
    iters: Optional[int] = None,
    lam: Optional[float] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    acceleration: bool = True,
    reestimate: bool = False,
) -> DetectorConfig:
    kwargs = {
        "algorithm": Algorithm.parse(algorithm),
        "inner": Algorithm.parse(inner, field_name="inner"),
        "acceleration": acceleration,
        "reestimate": reestimate,
        "lam": lam,
    }
    if iters is not None:
        kwargs["iters"] = iters
    if tol is not None:
        kwargs["tol"] = tol
    if max_iters is not None:
        kwargs["max_iters"] = max_iters
    return DetectorConfig(**kwargs)


def action_detect(
    detector: DetectorConfig,
    data_dir: Optional[str] = None,
    config_path: Optional[str] = None,
    k: Optional[int] = None,
    seed: int = 0,
    preset: Optional[str] = None,
    gap_plot: Optional[str] = None,
):
    """Run one detector and print the estimated anomaly set"""
    debug_print(f"Detecting with {detector}")

    with ErrorContext("Detect"):
        if data_dir:
            bundle = read_bundle(data_dir)
            sensing, measurements, spec = bundle.sensing, bundle.measurements, bundle.spec
        else:
            config = load_problem_config(config_path, preset)
            spec, _, sensing, measurements = _draw_problem(config, seed)

        if k is None:
            if spec is None:
                raise ConfigError("K is unknown; pass --k", field="k")
            k = spec.n_anomalies

        result = detector.run(measurements, sensing, k)

        print_message(format_indices(result.estimated_set))
        print_section("Scores")
        print_message(format_vector(result.scores))
        try:
            print_message(f"Largest-gap K estimate: {estimate_k(result.scores)}")
        except DegenerateScores:
            print_warning("Largest-gap K estimate: undefined (all scores equal)")
        if spec is not None:
            exact = result.estimated_set == spec.anomaly_set
            print_message(
                f"True set: {format_indices(spec.anomaly_set)} "
                f"({'recovered' if exact else 'not recovered'})",
                Colors.GREEN if exact else Colors.YELLOW,
            )

        scalars = {
            key: value
            for key, value in result.diagnostics.items()
            if isinstance(value, (bool, int, float, str, tuple))
        }
        if scalars:
            print_section("Diagnostics")
            for key in sorted(scalars):
                value = scalars[key]
                if isinstance(value, float):
                    value = format_float(value)
                elif isinstance(value, tuple):
                    value = format_indices(value)
                print_message(f"{key}: {value}")

        if gap_plot:
            render_gap_plot(result.scores, gap_plot, spec.n_anomalies if spec else None)
            print_message(f"Gap plot written to {gap_plot}")

        if result.diagnostics.get("all_zero"):
            raise AllZeroSolution(
                "LASSO estimate is identically zero; the reported set only reflects the tie rule",
                details=f"lambda: {format_float(result.diagnostics['lam'])}",
            )
        if result.diagnostics.get("non_converged"):
            raise DetectionError(
                "LASSO solver did not converge; the reported set comes from the best iterate",
                details=f"KKT residual: {format_float(result.diagnostics['kkt_residual'])}",
            )
        return result


def _load_completed(grid: GridSpec, output_dir: Path, ratio: Optional[float]) -> Dict[CellKey, CellResult]:
    completed: Dict[CellKey, CellResult] = {}
    for k in grid.k_values:
        path = output_dir / f"{results_filename(grid, k, ratio)}.csv"
        if not path.exists():
            continue
        for row in read_results_csv(path):
            if (row.algorithm, row.model, row.N, row.seed) != (
                grid.detector.algorithm.value,
                grid.template.model.value,
                grid.template.n_vars,
                grid.base_seed,
            ):
                raise ConfigError(f"{path} was produced by a different grid", field="resume")
            completed[(row.M, row.T, row.K)] = row.to_cell()
    if completed:
        logger.info(f"Resuming with {len(completed)} completed cells")
    return completed


def _write_phase_outputs(
    grid: GridSpec,
    completed: Dict[CellKey, CellResult],
    output_dir: Path,
    ratio: Optional[float],
    plots: bool,
) -> List[str]:
    written = []
    for k in grid.k_values:
        cells = [completed[key] for key in grid.cells() if key[2] == k and key in completed]
        stem = results_filename(grid, k, ratio)
        write_results_csv(output_dir / f"{stem}.csv", grid, cells)
        written.append(f"{stem}.csv")
        if plots and cells:
            title = f"{grid.detector.algorithm.value.upper()} {grid.template.model.value}, N={grid.template.n_vars}, K={k}"
            if ratio is not None:
                title += f", variance ratio {ratio:g}"
            matrix = phase_matrix(cells, grid.m_values, grid.t_values, k)
            render_phase_heatmap(
                matrix,
                grid.m_values,
                grid.t_values,
                output_dir / f"{stem}.png",
                title=title,
                confidence=grid.confidence,
                target_width=grid.target_width,
            )
            written.append(f"{stem}.png")
    return written


def _separation_note(grid: GridSpec) -> str:
    case = TheoryCase(
        n_vars=grid.template.n_vars,
        n_anomalies=grid.k_values[0],
        m_per_step=grid.m_values[0],
        mu2=grid.template.anomalous.mean,
        sigma2_sq=grid.template.anomalous.variance,
        sigma1_sq=grid.template.prevalent.variance,
    )
    holds = theory_separation_check(case, grid.template.model)
    return "holds" if holds else "does not hold"


def action_phase(
    config_path: str,
    output_dir: str,
    threads: int = 1,
    seed: Optional[int] = None,
    preset: Optional[str] = None,
    algorithm: Optional[str] = None,
    resume: bool = False,
    plots: bool = True,
) -> List[str]:
    """Run a phase grid (or a variance-ratio sweep) and write CSVs and heatmaps"""
    with ErrorContext("Phase"):
        base = load_grid_config(config_path, preset, algorithm, seed)
        out = Path(output_dir)
        manifest = RunManifest(command="phase", config=grid_to_dict(base), base_seed=base.base_seed)

        runs = [(None, base)]
        if base.variance_ratios:
            runs = [(ratio, with_variance_ratio(base, ratio)) for ratio in base.variance_ratios]

        print_message(
            f"Running {base.detector.algorithm.value} on {len(base.cells())} cells "
            f"x {len(runs)} setting(s) with {threads} worker(s)",
            Colors.BLUE,
        )

        for ratio, grid in runs:
            print_message(
                f"Recovery guarantee hypothesis for {grid.template.model.value}: {_separation_note(grid)}"
            )
            completed = _load_completed(grid, out, ratio) if resume else {}

            def record(cell: CellResult, completed=completed):
                completed[cell.key] = cell

            try:
                run_grid(grid, threads, completed=completed, on_result=record)
            except KeyboardInterrupt:
                print_warning(f"Interrupted; flushing {len(completed)} completed cells")
                manifest.outputs += _write_phase_outputs(grid, completed, out, ratio, plots=False)
                manifest.finish(complete=False)
                manifest.write(out)
                raise

            manifest.outputs += _write_phase_outputs(grid, completed, out, ratio, plots)

            capped = sum(cell.hit_max_trials for cell in completed.values())
            if capped:
                print_warning(f"⚠️  {capped} cells hit max_trials={grid.max_trials}")

        manifest.finish()
        manifest.write(out)
        print_success(f"✅ Wrote {len(manifest.outputs)} files to {output_dir}")
        return manifest.outputs


def action_theory(
    n_vars: int,
    n_anomalies: int,
    m_per_step: int,
    mu2: float,
    sigma2_sq: float,
    sigma1_sq: float,
    model: str = "jsm2r",
) -> Dict[str, float]:
    """Print the closed-form OSGA statistic expectations and the separation verdict"""
    with ErrorContext("Theory"):
        signal_model = SignalModel.parse(model)
        prevalent = TheoryCase(n_vars, n_anomalies, m_per_step, mu2, sigma2_sq, sigma1_sq, Case.PREVALENT)
        anomalous = TheoryCase(n_vars, n_anomalies, m_per_step, mu2, sigma2_sq, sigma1_sq, Case.ANOMALOUS)

        report = {
            "prevalent": theory_xi_expectation(prevalent),
            "anomalous": theory_xi_expectation(anomalous),
            "difference": theory_xi_difference(prevalent),
        }
        verdict = theory_separation_check(prevalent, signal_model)

        print_message(f"Prevalent E[xi]: {format_float(report['prevalent'])}")
        print_message(f"Anomalous E[xi]: {format_float(report['anomalous'])}")
        print_message(f"Difference: {format_float(report['difference'])}")
        print_message(
            f"Separation hypothesis ({signal_model.value}): {'true' if verdict else 'false'}",
            Colors.GREEN if verdict else Colors.YELLOW,
        )
        return report
