from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, optimize, special

from src.detect import Algorithm, DetectorConfig, estimate_k, mmv_lasso, mmv_somp, osga
from src.errors import ConfigError, DimensionError, DomainError
from src.experiment import (
    Case,
    CellResult,
    GridSpec,
    TheoryCase,
    draw_trial,
    jeffreys_interval,
    run_cell,
    run_grid,
    theory_separation_check,
    theory_xi_difference,
    theory_xi_expectation,
    variance_ratio_sweep,
    with_variance_ratio,
)
from src.model import GaussianSpec, ProblemTemplate, SignalModel

JSM2R = ProblemTemplate(20, GaussianSpec(0.0, 1.0), GaussianSpec(7.0, 1.0), SignalModel.JSM2R)
JSM3R = ProblemTemplate(20, GaussianSpec(7.0, 1.0), GaussianSpec(0.0, 10.0), SignalModel.JSM3R)


def beta_quantile(a, b, p):
    """Independent Beta quantile: adaptive quadrature of the density plus root finding."""
    log_norm = special.betaln(a, b)

    def density(x):
        return np.exp((a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - log_norm)

    mode = (a - 1) / (a + b - 2) if a > 1 and b > 1 else None

    def cdf(x):
        points = [mode] if mode is not None and 0 < mode < x else None
        value, _ = integrate.quad(density, 0.0, x, points=points, limit=200, epsabs=1e-13)
        return value

    return optimize.brentq(lambda x: cdf(x) - p, 1e-15, 1 - 1e-15, xtol=1e-14)


def always_right(trial):
    return trial.spec.anomaly_set


def always_wrong(trial):
    n_vars = trial.spec.n_vars
    return [i for i in range(1, n_vars + 1) if i not in trial.spec.anomaly_set][: trial.spec.n_anomalies]


def coin_flip(trial):
    return always_right(trial) if trial.sensing.matrices[0, 0, 0] > 0 else always_wrong(trial)


def always_fails(trial):
    raise DimensionError("stub failure")


def small_grid(**overrides):
    settings = dict(template=JSM2R, m_values=(4,), t_values=(3,), k_values=(2,))
    settings.update(overrides)
    return GridSpec(**settings)


# Jeffreys interval


def test_jeffreys_boundaries():
    low, high = jeffreys_interval(0, 10, 0.95)
    assert low == 0.0 and high < 1.0
    low, high = jeffreys_interval(10, 10, 0.95)
    assert high == 1.0 and low > 0.0


def test_jeffreys_matches_quadrature_oracle():
    low, high = jeffreys_interval(5, 10, 0.95)
    assert low == pytest.approx(beta_quantile(5.5, 5.5, 0.025), abs=1e-6)
    assert high == pytest.approx(beta_quantile(5.5, 5.5, 0.975), abs=1e-6)
    assert low == pytest.approx(1.0 - high, abs=1e-12)


def test_jeffreys_random_triples_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 201))
        s = int(rng.integers(0, n + 1))
        confidence = float(rng.uniform(0.5, 0.99))
        tail = (1.0 - confidence) / 2.0
        low, high = jeffreys_interval(s, n, confidence)
        if s > 0:
            assert low == pytest.approx(beta_quantile(s + 0.5, n - s + 0.5, tail), abs=1e-6)
        if s < n:
            assert high == pytest.approx(beta_quantile(s + 0.5, n - s + 0.5, 1 - tail), abs=1e-6)


def test_jeffreys_contains_point_estimate():
    for n in (1, 7, 40, 300):
        for s in range(0, n + 1, max(1, n // 7)):
            low, high = jeffreys_interval(s, n, 0.95)
            assert low <= s / n <= high


def test_jeffreys_width_shrinks_with_more_trials():
    widths = []
    for j in range(1, 30):
        low, high = jeffreys_interval(3 * j, 10 * j, 0.95)
        widths.append(high - low)
    assert all(b < a for a, b in zip(widths, widths[1:]))


@pytest.mark.parametrize("s, n, confidence", [(3, 0, 0.95), (-1, 5, 0.95), (6, 5, 0.95), (2, 5, 1.0)])
def test_jeffreys_rejects_bad_arguments(s, n, confidence):
    with pytest.raises(DomainError):
        jeffreys_interval(s, n, confidence)


# Grid cells


def width_oracle_trials(min_trials, confidence=0.95, target=0.1):
    n = min_trials
    while True:
        low, high = jeffreys_interval(n, n, confidence)
        if high - low < target:
            return n
        n += 1


def test_run_cell_always_right_stops_on_width():
    grid = small_grid()
    cell = run_cell(grid, 4, 3, 2, detector=always_right)
    assert cell.rate == 1.0
    assert cell.trials == width_oracle_trials(grid.min_trials)
    assert cell.ci_high == 1.0
    assert cell.width < 0.1
    assert not cell.hit_max_trials


def test_run_cell_always_wrong_is_symmetric():
    grid = small_grid()
    right = run_cell(grid, 4, 3, 2, detector=always_right)
    wrong = run_cell(grid, 4, 3, 2, detector=always_wrong)
    assert wrong.rate == 0.0
    assert wrong.successes == 0
    assert wrong.trials == right.trials
    assert wrong.ci_low == 0.0
    assert wrong.ci_high == pytest.approx(1.0 - right.ci_low, abs=1e-12)


def test_run_cell_is_deterministic():
    grid = small_grid(max_trials=80)
    first = run_cell(grid, 4, 3, 2)
    second = run_cell(grid, 4, 3, 2)
    assert first == second


def test_run_cell_reports_capped_cells():
    grid = small_grid(max_trials=50)
    cell = run_cell(grid, 4, 3, 2, detector=coin_flip)
    assert cell.trials == 50
    assert cell.hit_max_trials
    assert cell.width >= 0.1
    assert 0 < cell.successes < 50


def test_run_cell_counts_detector_errors_as_failures():
    grid = small_grid()
    cell = run_cell(grid, 4, 3, 2, detector=always_fails)
    assert cell.successes == 0
    assert cell.errors == cell.trials


def test_run_cell_counts_somp_dimension_errors():
    grid = small_grid(detector=DetectorConfig(Algorithm.SOMP), max_trials=30)
    cell = run_cell(grid, 1, 2, 2)
    assert cell.errors == cell.trials
    assert cell.rate == 0.0


def test_draw_trial_is_keyed_by_cell_and_index():
    grid = small_grid()
    a = draw_trial(grid, 4, 3, 2, 0)
    b = draw_trial(grid, 4, 3, 2, 0)
    c = draw_trial(grid, 4, 3, 2, 1)
    np.testing.assert_array_equal(a.sensing.matrices, b.sensing.matrices)
    np.testing.assert_array_equal(a.measurements.vectors, b.measurements.vectors)
    assert not np.array_equal(a.sensing.matrices, c.sensing.matrices)
    assert a.spec.n_anomalies == 2


def test_grid_cells_order():
    grid = small_grid(m_values=(3, 4), t_values=(5,), k_values=(1, 2))
    assert grid.cells() == [(3, 5, 1), (4, 5, 1), (3, 5, 2), (4, 5, 2)]


def test_run_grid_single_cell_equals_run_cell():
    grid = small_grid(max_trials=60)
    assert run_grid(grid) == [run_cell(grid, 4, 3, 2)]


def test_run_grid_threads_do_not_change_results():
    grid = small_grid(m_values=(4, 8), t_values=(2, 3), k_values=(1,), max_trials=60)
    serial = run_grid(grid, threads=1)
    parallel = run_grid(grid, threads=2)
    assert serial == parallel
    assert [cell.key for cell in parallel] == grid.cells()


def test_run_grid_reuses_completed_cells():
    grid = small_grid(t_values=(2, 3))
    stored = CellResult(4, 2, 2, 7, 7, 1.0, 0.8, 1.0, False)
    seen = []
    results = run_grid(grid, detector=always_right, completed={(4, 2, 2): stored}, on_result=seen.append)
    assert results[0] is stored
    assert [cell.key for cell in seen] == [(4, 3, 2)]


@pytest.mark.parametrize(
    "overrides",
    [
        {"m_values": ()},
        {"t_values": (0, 1)},
        {"k_values": (20,)},
        {"target_width": 0.0},
        {"confidence": 1.0},
        {"min_trials": 10, "max_trials": 5},
        {"variance_ratios": (2.0, -1.0)},
    ],
)
def test_grid_validation(overrides):
    with pytest.raises(ConfigError):
        small_grid(**overrides)


def test_with_variance_ratio_scales_anomalous_variance():
    grid = small_grid(template=JSM3R)
    scaled = with_variance_ratio(grid, 5.0)
    assert scaled.template.anomalous == GaussianSpec(0.0, 5.0)
    assert scaled.template.prevalent == JSM3R.prevalent
    assert scaled.m_values == grid.m_values
    with pytest.raises(DomainError):
        with_variance_ratio(grid, 0.0)


def test_variance_ratio_sweep_runs_each_ratio():
    grid = small_grid(template=JSM3R, variance_ratios=(2.0, 5.0))
    results = variance_ratio_sweep(grid, detector=always_right)
    assert list(results) == [2.0, 5.0]
    assert all(len(cells) == 1 for cells in results.values())


# Closed-form oracles


def reference_case(case=Case.PREVALENT, **overrides):
    settings = dict(n_vars=100, n_anomalies=5, m_per_step=10, mu2=7.0, sigma2_sq=1.0, sigma1_sq=1.0)
    settings.update(overrides)
    return TheoryCase(case=case, **settings)


def test_theory_expectations():
    assert theory_xi_expectation(reference_case(Case.PREVALENT)) == pytest.approx(3560.0)
    assert theory_xi_expectation(reference_case(Case.ANOMALOUS)) == pytest.approx(8950.0)
    assert theory_xi_difference(reference_case()) == pytest.approx(5390.0)


def test_theory_difference_is_consistent():
    rng = np.random.default_rng(1)
    for _ in range(20):
        params = dict(
            n_vars=int(rng.integers(10, 200)),
            n_anomalies=int(rng.integers(1, 10)),
            m_per_step=int(rng.integers(1, 50)),
            mu2=float(rng.uniform(-5, 5)),
            sigma2_sq=float(rng.uniform(0, 5)),
            sigma1_sq=float(rng.uniform(0, 5)),
        )
        anomalous = theory_xi_expectation(reference_case(Case.ANOMALOUS, **params))
        prevalent = theory_xi_expectation(reference_case(Case.PREVALENT, **params))
        assert anomalous - prevalent == pytest.approx(theory_xi_difference(reference_case(**params)))


def test_theory_separation_check():
    assert theory_separation_check(reference_case(), SignalModel.JSM2R)
    assert not theory_separation_check(reference_case(mu2=0.0, sigma2_sq=1.0), SignalModel.JSM2R)
    assert not theory_separation_check(reference_case(), SignalModel.JSM3R)
    assert theory_separation_check(reference_case(sigma2_sq=10.0), SignalModel.JSM3R)


def test_theory_case_validation():
    with pytest.raises(DomainError):
        reference_case(n_anomalies=100)
    with pytest.raises(DomainError):
        reference_case(sigma1_sq=-1.0)
    with pytest.raises(DomainError):
        reference_case(mu2=float("inf"))


# Long Monte-Carlo checks

TABLE_TEMPLATES = {
    SignalModel.JSM2R: ProblemTemplate(
        100, GaussianSpec(0.0, 1.0), GaussianSpec(7.0, 1.0), SignalModel.JSM2R
    ),
    SignalModel.JSM3R: ProblemTemplate(
        100, GaussianSpec(7.0, 1.0), GaussianSpec(0.0, 10.0), SignalModel.JSM3R
    ),
}


@pytest.mark.slow
@pytest.mark.parametrize(
    "algorithm, model, easy",
    [
        (Algorithm.OSGA, SignalModel.JSM2R, 50),
        (Algorithm.SOMP, SignalModel.JSM2R, 50),
        (Algorithm.LASSO, SignalModel.JSM2R, 50),
        (Algorithm.ACIE, SignalModel.JSM3R, 50),
        # the transpose estimate alone is too noisy at (50, 50)
        (Algorithm.TECC, SignalModel.JSM3R, 100),
    ],
)
def test_phase_diagram_corners(algorithm, model, easy):
    grid = GridSpec(
        template=TABLE_TEMPLATES[model],
        m_values=(1, easy),
        t_values=(1, easy),
        k_values=(1,),
        detector=DetectorConfig(algorithm),
    )
    assert run_cell(grid, easy, easy, 1).rate >= 0.95
    assert run_cell(grid, 1, 1, 1).rate <= 0.2


@pytest.mark.slow
@pytest.mark.parametrize(
    "algorithm, easy",
    [(Algorithm.ACIE, 50), (Algorithm.TECC, 100)],
)
def test_success_rate_grows_with_variance_ratio(algorithm, easy):
    grid = GridSpec(
        template=TABLE_TEMPLATES[SignalModel.JSM3R],
        m_values=(easy,),
        t_values=(easy,),
        k_values=(5,),
        detector=DetectorConfig(algorithm),
        max_trials=1000,
    )
    sweep = variance_ratio_sweep(grid, (2.0, 5.0, 10.0))
    cells = [sweep[ratio][0] for ratio in (2.0, 5.0, 10.0)]
    for lower, higher in zip(cells, cells[1:]):
        assert higher.ci_high >= lower.ci_low
    lowest, highest = cells[0], cells[-1]
    assert highest.ci_low > lowest.ci_high
    assert highest.rate >= 0.5


def reliable_cells(grid, algorithm):
    results = run_grid(replace(grid, detector=DetectorConfig(algorithm)))
    return {(cell.m, cell.t) for cell in results if cell.rate >= 0.95}


@pytest.mark.slow
def test_lasso_succeeds_wherever_osga_does():
    grid = GridSpec(
        template=TABLE_TEMPLATES[SignalModel.JSM2R],
        m_values=(10, 20),
        t_values=(10, 20, 40),
        k_values=(5,),
    )
    osga_cells = reliable_cells(grid, Algorithm.OSGA)
    lasso_cells = reliable_cells(grid, Algorithm.LASSO)
    assert (20, 40) in osga_cells
    assert osga_cells < lasso_cells


@pytest.mark.slow
def test_somp_needs_fewer_steps_than_osga():
    grid = GridSpec(
        template=TABLE_TEMPLATES[SignalModel.JSM2R],
        m_values=(50,),
        t_values=(4, 20),
        k_values=(5,),
    )
    somp_cells = reliable_cells(grid, Algorithm.SOMP)
    osga_cells = reliable_cells(grid, Algorithm.OSGA)
    assert osga_cells == {(50, 20)}
    assert min(t for _, t in somp_cells) < min(t for _, t in osga_cells)


@pytest.mark.slow
def test_acie_succeeds_wherever_tecc_does():
    grid = GridSpec(
        template=TABLE_TEMPLATES[SignalModel.JSM3R],
        m_values=(50, 100),
        t_values=(50, 100),
        k_values=(1,),
    )
    tecc_cells = reliable_cells(grid, Algorithm.TECC)
    acie_cells = reliable_cells(grid, Algorithm.ACIE)
    assert (50, 50) in acie_cells
    assert tecc_cells < acie_cells


@pytest.mark.slow
@pytest.mark.parametrize("k", [1, 5, 10])
def test_largest_gap_recovers_k(k):
    grid = GridSpec(
        template=TABLE_TEMPLATES[SignalModel.JSM2R],
        m_values=(50,),
        t_values=(50,),
        k_values=(k,),
    )
    detectors = {
        "osga": lambda trial: osga(trial.measurements, trial.sensing, k),
        "somp": lambda trial: mmv_somp(trial.measurements, trial.sensing, 20),
        "lasso": lambda trial: mmv_lasso(trial.measurements, trial.sensing, k),
    }
    hits = {name: 0 for name in detectors}
    for index in range(100):
        trial = draw_trial(grid, 50, 50, k, index)
        for name, detect in detectors.items():
            hits[name] += int(estimate_k(detect(trial).scores) == k)
    for name, count in hits.items():
        assert count >= 90, name
