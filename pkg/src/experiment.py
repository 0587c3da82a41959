"""
experiment.py - Monte-Carlo harness and closed-form oracles

Each grid cell (M, T, K) is sampled trial by trial until the Jeffreys interval
around its success rate is narrower than the target width. Every trial draws
from its own stream keyed by (M, T, K, trial), so results do not depend on how
cells are scheduled across worker processes.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from scipy.special import betaincinv

from .config import (
    DEFAULT_SEED,
    DEFAULT_VARIANCE_RATIOS,
    JEFFREYS_CONFIDENCE,
    JEFFREYS_TARGET_WIDTH,
    MAX_TRIALS,
    MIN_TRIALS,
)
from .detect import DetectorConfig
from .errors import AnomalyError, ConfigError, DomainError
from .model import (
    GaussianSpec,
    MeasurementSet,
    ProblemSpec,
    ProblemTemplate,
    SeededRng,
    SensingSequence,
    SignalEnsemble,
    SignalModel,
    draw_sensing,
    generate,
    measure,
    sample_anomaly_set,
)

logger = logging.getLogger(__name__)

CellKey = Tuple[int, int, int]


def jeffreys_interval(successes: int, trials: int, confidence: float) -> Tuple[float, float]:
    """Equal-tailed Beta(s + 1/2, n - s + 1/2) interval.

    The lower bound is 0 when there are no successes and the upper bound is 1
    when every trial succeeded.
    """
    if trials < 1 or not 0 <= successes <= trials:
        raise DomainError(f"Need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    if not 0.0 < confidence < 1.0:
        raise DomainError(f"Confidence must lie in (0, 1), got {confidence}")

    a = successes + 0.5
    b = trials - successes + 0.5
    tail = (1.0 - confidence) / 2.0
    low = 0.0 if successes == 0 else float(betaincinv(a, b, tail))
    high = 1.0 if successes == trials else float(betaincinv(a, b, 1.0 - tail))
    return low, high


@dataclass(frozen=True)
class GridSpec:
    template: ProblemTemplate
    m_values: Tuple[int, ...]
    t_values: Tuple[int, ...]
    k_values: Tuple[int, ...]
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    confidence: float = JEFFREYS_CONFIDENCE
    target_width: float = JEFFREYS_TARGET_WIDTH
    min_trials: int = MIN_TRIALS
    max_trials: int = MAX_TRIALS
    base_seed: int = DEFAULT_SEED
    variance_ratios: Tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("m_values", "t_values", "k_values"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ConfigError(f"{name} must not be empty", field=name)
            if min(values) < 1:
                raise ConfigError(f"All {name} must be >= 1", field=name)
            object.__setattr__(self, name, values)
        if max(self.k_values) >= self.template.n_vars:
            raise ConfigError(
                f"Every K must be below N={self.template.n_vars}", field="k_values"
            )
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)", field="confidence")
        if not 0.0 < self.target_width < 1.0:
            raise ConfigError("target_width must lie in (0, 1)", field="target_width")
        if self.min_trials < 1 or self.max_trials < self.min_trials:
            raise ConfigError(
                f"Need 1 <= min_trials <= max_trials, got {self.min_trials}, {self.max_trials}",
                field="min_trials",
            )
        ratios = tuple(float(r) for r in self.variance_ratios)
        if any(not r > 0 for r in ratios):
            raise ConfigError("variance_ratios must be positive", field="variance_ratios")
        object.__setattr__(self, "variance_ratios", ratios)

    def cells(self) -> List[CellKey]:
        """Cell coordinates (m, t, k), K outermost then M then T."""
        return [(m, t, k) for k in self.k_values for m in self.m_values for t in self.t_values]


@dataclass(frozen=True)
class CellResult:
    m: int
    t: int
    k: int
    successes: int
    trials: int
    rate: float
    ci_low: float
    ci_high: float
    hit_max_trials: bool
    errors: int = 0
    flagged: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def key(self) -> CellKey:
        return (self.m, self.t, self.k)

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low


@dataclass(frozen=True, eq=False)
class Trial:
    """One random draw of a cell: the true problem and what the detector sees."""

    spec: ProblemSpec
    signals: SignalEnsemble
    sensing: SensingSequence
    measurements: MeasurementSet


# Replaces the configured detector; returns a 1-based estimated set.
TrialDetector = Callable[[Trial], Sequence[int]]


def draw_trial(grid: GridSpec, m: int, t: int, k: int, trial: int) -> Trial:
    rng = SeededRng(grid.base_seed, (m, t, k, trial))
    spec = grid.template.instantiate(sample_anomaly_set(grid.template.n_vars, k, rng))
    signals = generate(spec, t, rng)
    sensing = draw_sensing(m, spec.n_vars, t, rng)
    return Trial(spec=spec, signals=signals, sensing=sensing, measurements=measure(sensing, signals))


def run_cell(
    grid: GridSpec,
    m: int,
    t: int,
    k: int,
    detector: Optional[TrialDetector] = None,
) -> CellResult:
    """Sample one cell until its Jeffreys interval is narrow enough.

    Detector errors count as failed trials and never abort the cell.
    """
    started = time.perf_counter()
    successes = 0
    errors = 0
    flagged = 0
    trials = 0
    low, high = 0.0, 1.0

    while trials < grid.max_trials:
        trial = draw_trial(grid, m, t, k, trials)
        trials += 1
        try:
            if detector is None:
                result = grid.detector.run(trial.measurements, trial.sensing, k)
                estimated = result.estimated_set
                flagged += int(result.flagged)
            else:
                estimated = tuple(sorted(int(i) for i in detector(trial)))
        except AnomalyError as e:
            errors += 1
            logger.debug(f"Trial {trials} of cell (M={m}, T={t}, K={k}) failed: {e}")
            estimated = ()
        successes += int(tuple(estimated) == trial.spec.anomaly_set)

        low, high = jeffreys_interval(successes, trials, grid.confidence)
        if trials >= grid.min_trials and high - low < grid.target_width:
            break

    hit_max = high - low >= grid.target_width
    result = CellResult(
        m=m,
        t=t,
        k=k,
        successes=successes,
        trials=trials,
        rate=successes / trials,
        ci_low=low,
        ci_high=high,
        hit_max_trials=hit_max,
        errors=errors,
        flagged=flagged,
        wall_time=time.perf_counter() - started,
    )
    if hit_max:
        logger.warning(
            f"Cell (M={m}, T={t}, K={k}) hit max_trials={grid.max_trials} "
            f"with interval width {high - low:.4f}"
        )
    else:
        logger.info(
            f"Cell (M={m}, T={t}, K={k}): rate {result.rate:.3f} over {trials} trials "
            f"[{low:.3f}, {high:.3f}]"
        )
    return result


def _run_cell_job(job: Tuple[GridSpec, CellKey, Optional[TrialDetector]]) -> CellResult:
    grid, (m, t, k), detector = job
    return run_cell(grid, m, t, k, detector)


def run_grid(
    grid: GridSpec,
    threads: int = 1,
    detector: Optional[TrialDetector] = None,
    completed: Optional[Dict[CellKey, CellResult]] = None,
    on_result: Optional[Callable[[CellResult], None]] = None,
) -> List[CellResult]:
    """Run every cell of the grid and return results in ``grid.cells()`` order.

    Cells already present in ``completed`` are reused. ``on_result`` is called
    for each newly computed cell in grid order. With ``threads > 1`` cells run
    in worker processes, so a custom ``detector`` must be picklable.
    """
    completed = dict(completed or {})
    pending = [key for key in grid.cells() if key not in completed]
    logger.info(
        f"Running {len(pending)} of {len(grid.cells())} cells "
        f"({grid.detector.algorithm.value}, {threads} worker(s))"
    )

    jobs = [(grid, key, detector) for key in pending]
    if threads <= 1 or len(jobs) <= 1:
        for job in jobs:
            cell = _run_cell_job(job)
            completed[cell.key] = cell
            if on_result is not None:
                on_result(cell)
    else:
        executor = ProcessPoolExecutor(max_workers=threads)
        try:
            for cell in executor.map(_run_cell_job, jobs):
                completed[cell.key] = cell
                if on_result is not None:
                    on_result(cell)
        except BaseException:
            executor.shutdown(wait=False, cancel_futures=True)
            raise
        executor.shutdown()

    return [completed[key] for key in grid.cells()]


def with_variance_ratio(grid: GridSpec, ratio: float) -> GridSpec:
    """Same grid with the anomalous variance set to ratio times the prevalent one."""
    if not ratio > 0:
        raise DomainError(f"Variance ratio must be positive, got {ratio}")
    template = grid.template
    anomalous = GaussianSpec(template.anomalous.mean, ratio * template.prevalent.variance)
    return replace(grid, template=template.with_anomalous(anomalous))


def variance_ratio_sweep(
    grid: GridSpec,
    ratios: Optional[Iterable[float]] = None,
    threads: int = 1,
    detector: Optional[TrialDetector] = None,
) -> Dict[float, List[CellResult]]:
    """Rerun the grid once per sigma_2^2 / sigma_1^2 ratio."""
    if ratios is None:
        ratios = grid.variance_ratios or DEFAULT_VARIANCE_RATIOS
    results: Dict[float, List[CellResult]] = {}
    for ratio in ratios:
        logger.info(f"Variance ratio {ratio:g}")
        results[float(ratio)] = run_grid(with_variance_ratio(grid, ratio), threads, detector)
    return results


class Case(str, Enum):
    PREVALENT = "prevalent"
    ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class TheoryCase:
    """Parameters of the OSGA statistic's expectation (prevalent mean is zero)."""

    n_vars: int
    n_anomalies: int
    m_per_step: int
    mu2: float
    sigma2_sq: float
    sigma1_sq: float
    case: Case = Case.PREVALENT

    def __post_init__(self):
        reals = (self.mu2, self.sigma2_sq, self.sigma1_sq)
        if not all(math.isfinite(v) for v in reals):
            raise DomainError("Theory parameters must be finite")
        if self.sigma2_sq < 0 or self.sigma1_sq < 0:
            raise DomainError("Variances must be nonnegative")
        if self.m_per_step < 1 or not 1 <= self.n_anomalies < self.n_vars:
            raise DomainError(
                f"Need M >= 1 and 1 <= K < N, got N={self.n_vars}, K={self.n_anomalies}, M={self.m_per_step}"
            )


def theory_xi_expectation(case: TheoryCase) -> float:
    """E[xi_n] for a prevalent or an anomalous index under Gaussian sensing."""
    N, K, M = case.n_vars, case.n_anomalies, case.m_per_step
    anomalous_power = case.mu2**2 + case.sigma2_sq
    if case.case is Case.PREVALENT:
        return M * (K * anomalous_power + (M + 1 + N - K) * case.sigma1_sq)
    return M * ((M + 1 + K) * anomalous_power + (N - K) * case.sigma1_sq)


def theory_xi_difference(case: TheoryCase) -> float:
    """Anomalous minus prevalent expectation, M(M+1)(mu2^2 + sigma2^2 - sigma1^2)."""
    M = case.m_per_step
    return M * (M + 1) * (case.mu2**2 + case.sigma2_sq - case.sigma1_sq)


def theory_separation_check(case: TheoryCase, model: SignalModel) -> bool:
    """Whether the recovery guarantee's hypothesis holds for this model."""
    if model is SignalModel.JSM2R:
        return case.mu2**2 + case.sigma2_sq > case.sigma1_sq
    return case.sigma2_sq > case.sigma1_sq
