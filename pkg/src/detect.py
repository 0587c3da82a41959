"""
detect.py - Anomaly detection from mixed measurement vectors

Five detectors share one signature, (measurements, sensing, k) -> DetectionResult:

* ``osga``      - one-step greedy ranking by averaged squared correlations
* ``mmv_somp``  - simultaneous orthogonal matching pursuit
* ``mmv_lasso`` - LASSO on the vertically stacked system
* ``tecc``      - common-component removal followed by an inner detector
* ``acie``      - iterative common-component refinement on complement projections

Index sets in results are 1-based and sorted.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ACIE_ITERATIONS, LASSO_MAX_ITERS, LASSO_TOL
from .errors import (
    ConfigError,
    DegenerateColumn,
    DegenerateScores,
    DimensionError,
    DomainError,
    NonConvergence,
)
from .linalg import (
    LassoConfig,
    lasso,
    least_squares,
    mgs_extend,
    orthonormal_complement,
)
from .model import MeasurementSet, SensingSequence, check_consistent, stack

logger = logging.getLogger(__name__)


class Algorithm(str, Enum):
    OSGA = "osga"
    SOMP = "somp"
    LASSO = "lasso"
    TECC = "tecc"
    ACIE = "acie"

    @classmethod
    def parse(cls, value: str, field_name: str = "algorithm") -> "Algorithm":
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ConfigError(
                f"Unknown algorithm {value!r} (expected one of: {choices})",
                field=field_name,
            )


INNER_ALGORITHMS = (Algorithm.OSGA, Algorithm.SOMP, Algorithm.LASSO)


@dataclass(frozen=True, eq=False)
class CommonComponentEstimate:
    x_hat_c: np.ndarray
    residual_measurements: MeasurementSet


@dataclass(frozen=True, eq=False)
class DetectionResult:
    estimated_set: Tuple[int, ...]
    scores: np.ndarray
    algorithm: Algorithm
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    common: Optional[CommonComponentEstimate] = None

    @property
    def flagged(self) -> bool:
        """True when the result came from a non-converged or all-zero solve."""
        return bool(self.diagnostics.get("non_converged") or self.diagnostics.get("all_zero"))


@dataclass(frozen=True, eq=False)
class ComplementProjection:
    y_tilde: np.ndarray  # stacked q_t^T y_t
    phi_tilde: np.ndarray  # stacked q_t^T phi_t
    bases: List[np.ndarray]  # q_t per time-step
    rank_deficient_steps: int


def _check_k(k: int, n_vars: int) -> None:
    if k < 1 or k >= n_vars:
        raise DimensionError(f"Need 1 <= k < N, got k={k}, N={n_vars}")


def top_k(scores: np.ndarray, k: int) -> Tuple[int, ...]:
    """1-based indices of the k largest scores; ties go to the smallest index."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or k < 1 or k > scores.shape[0]:
        raise DimensionError(f"top_k needs 1 <= k <= {scores.shape[0]}, got k={k}")
    order = np.argsort(-scores, kind="stable")
    return tuple(sorted(int(i) + 1 for i in order[:k]))


def _correlations(vectors: np.ndarray, sensing: SensingSequence) -> np.ndarray:
    """<v_t, phi_t(., n)> for every (t, n)."""
    return np.einsum("tm,tmn->tn", vectors, sensing.matrices)


def osga(measurements: MeasurementSet, sensing: SensingSequence, k: int) -> DetectionResult:
    check_consistent(measurements, sensing)
    _check_k(k, sensing.n_vars)

    correlations = _correlations(measurements.vectors, sensing)
    scores = np.mean(correlations**2, axis=0)
    return DetectionResult(
        estimated_set=top_k(scores, k),
        scores=scores,
        algorithm=Algorithm.OSGA,
    )


def mmv_somp(measurements: MeasurementSet, sensing: SensingSequence, k: int) -> DetectionResult:
    """Greedy selection on the normalized residual correlations summed over time.

    Selection normalizes by the original column norms; residuals are updated
    with the orthogonalized column. Already selected indices are never picked
    again. ``scores`` holds each selected index's statistic at pick time and
    the post-selection statistic for the rest.
    """
    check_consistent(measurements, sensing)
    _check_k(k, sensing.n_vars)
    if k > sensing.m_per_step:
        raise DimensionError(
            f"SOMP orthogonalization needs k <= M, got k={k}, M={sensing.m_per_step}"
        )

    phi = sensing.matrices
    norms = np.linalg.norm(phi, axis=1)  # (T, N)
    degenerate = np.any(norms == 0.0, axis=0)
    if degenerate.any():
        logger.warning(f"SOMP skipping {int(degenerate.sum())} zero-norm sensing columns")
    if int((~degenerate).sum()) < k:
        raise DegenerateColumn(
            f"Only {int((~degenerate).sum())} usable columns for k={k}"
        )
    safe_norms = np.where(norms == 0.0, 1.0, norms)

    residual = np.array(measurements.vectors, dtype=float, copy=True)
    excluded = degenerate.copy()
    scores = np.zeros(sensing.n_vars)
    basis: List[np.ndarray] = []
    selected: List[int] = []
    residual_norms = [np.linalg.norm(residual, axis=1)]
    dropped_steps = 0

    for _ in range(k):
        statistic = np.sum(np.abs(_correlations(residual, sensing)) / safe_norms, axis=0)
        pick = int(np.argmax(np.where(excluded, -np.inf, statistic)))
        scores[pick] = statistic[pick]
        selected.append(pick)
        excluded[pick] = True

        gamma, dropped = mgs_extend(basis, phi[:, :, pick])
        dropped_steps += int(dropped.sum())
        basis.append(gamma)
        residual -= np.sum(residual * gamma, axis=1)[:, None] * gamma
        residual_norms.append(np.linalg.norm(residual, axis=1))

    final = np.sum(np.abs(_correlations(residual, sensing)) / safe_norms, axis=0)
    remaining = ~np.isin(np.arange(sensing.n_vars), selected)
    scores[remaining] = final[remaining]

    if dropped_steps:
        logger.debug(f"SOMP: {dropped_steps} dependent columns left residuals unchanged")
    return DetectionResult(
        estimated_set=tuple(sorted(i + 1 for i in selected)),
        scores=scores,
        algorithm=Algorithm.SOMP,
        diagnostics={
            "selection_order": tuple(i + 1 for i in selected),
            "degenerate_columns": tuple(int(i) + 1 for i in np.flatnonzero(degenerate)),
            "orthogonalization_dropped": dropped_steps,
            "residual_norms": np.array(residual_norms),
            "residuals": residual,
            "basis": np.stack(basis, axis=2),
        },
    )


def mmv_lasso(
    measurements: MeasurementSet,
    sensing: SensingSequence,
    k: int,
    config: Optional[LassoConfig] = None,
) -> DetectionResult:
    _check_k(k, sensing.n_vars)
    A, b = stack(sensing, measurements)

    diagnostics: Dict[str, Any] = {}
    try:
        solution = lasso(A, b, config)
    except NonConvergence as e:
        solution = e.solution
        diagnostics["non_converged"] = True

    scores = np.abs(solution.coefficients)
    if not np.any(scores):
        logger.warning(
            f"LASSO estimate is identically zero (lambda={solution.lam:.6g}); "
            "falling back to the tie rule"
        )
        diagnostics["all_zero"] = True

    diagnostics.update(
        iterations=solution.iterations_used,
        objective=solution.final_objective,
        kkt_residual=solution.kkt_residual,
        lam=solution.lam,
    )
    return DetectionResult(
        estimated_set=top_k(scores, k),
        scores=scores,
        algorithm=Algorithm.LASSO,
        diagnostics=diagnostics,
    )


def _run_inner(
    inner: Algorithm,
    measurements: MeasurementSet,
    sensing: SensingSequence,
    k: int,
    lasso_config: Optional[LassoConfig],
) -> DetectionResult:
    if inner is Algorithm.OSGA:
        return osga(measurements, sensing, k)
    if inner is Algorithm.SOMP:
        return mmv_somp(measurements, sensing, k)
    if inner is Algorithm.LASSO:
        return mmv_lasso(measurements, sensing, k, lasso_config)
    raise ConfigError(f"{inner.value} cannot be used as an inner detector", field="inner")


def subtract_common_component(
    measurements: MeasurementSet, sensing: SensingSequence, x_c: np.ndarray
) -> CommonComponentEstimate:
    """y_t - phi_t x_c for every t."""
    check_consistent(measurements, sensing)
    x_c = np.asarray(x_c, dtype=float)
    if x_c.shape != (sensing.n_vars,):
        raise DimensionError(f"Common component must have length {sensing.n_vars}")
    residual = measurements.vectors - np.einsum("tmn,n->tm", sensing.matrices, x_c)
    return CommonComponentEstimate(x_hat_c=x_c, residual_measurements=MeasurementSet(residual))


def estimate_common_component(
    measurements: MeasurementSet, sensing: SensingSequence
) -> CommonComponentEstimate:
    """Transpose estimate x_c = phi^T y / (T M) on the stacked system."""
    A, b = stack(sensing, measurements)
    x_c = (A.T @ b) / (sensing.n_steps * sensing.m_per_step)
    return subtract_common_component(measurements, sensing, x_c)


def tecc(
    measurements: MeasurementSet,
    sensing: SensingSequence,
    k: int,
    inner: Algorithm = Algorithm.OSGA,
    lasso_config: Optional[LassoConfig] = None,
    common_override: Optional[np.ndarray] = None,
) -> DetectionResult:
    """Remove the transpose estimate of the common component, then detect.

    ``common_override`` replaces the estimate (used to study the detector with
    the exact expectation plugged in).
    """
    check_consistent(measurements, sensing)
    _check_k(k, sensing.n_vars)
    if common_override is None:
        common = estimate_common_component(measurements, sensing)
    else:
        common = subtract_common_component(measurements, sensing, common_override)

    result = _run_inner(inner, common.residual_measurements, sensing, k, lasso_config)
    return DetectionResult(
        estimated_set=result.estimated_set,
        scores=result.scores,
        algorithm=Algorithm.TECC,
        diagnostics={"inner": inner.value, **result.diagnostics},
        common=common,
    )


def project_onto_complement(
    measurements: MeasurementSet,
    sensing: SensingSequence,
    support: Sequence[int],
) -> ComplementProjection:
    """Project each step onto the complement of the selected columns.

    ``support`` is 1-based. Returns y~ and phi~ stacked vertically over t.
    """
    check_consistent(measurements, sensing)
    columns = np.asarray(support, dtype=int) - 1
    bases = []
    y_blocks = []
    phi_blocks = []
    deficient = 0
    for t in range(sensing.n_steps):
        phi_t = sensing.matrices[t]
        complement = orthonormal_complement(phi_t[:, columns])
        deficient += int(complement.rank_deficient)
        q = complement.basis
        bases.append(q)
        y_blocks.append(q.T @ measurements.vectors[t])
        phi_blocks.append(q.T @ phi_t)
    return ComplementProjection(
        y_tilde=np.concatenate(y_blocks),
        phi_tilde=np.vstack(phi_blocks),
        bases=bases,
        rank_deficient_steps=deficient,
    )


def acie(
    measurements: MeasurementSet,
    sensing: SensingSequence,
    k: int,
    iters: int = ACIE_ITERATIONS,
    inner: Algorithm = Algorithm.OSGA,
    lasso_config: Optional[LassoConfig] = None,
    reestimate: bool = False,
    initial_support: Optional[Sequence[int]] = None,
) -> DetectionResult:
    """Alternating common and innovation estimation.

    The support starts from TECC (or ``initial_support``) and stays fixed
    unless ``reestimate`` is set, in which case the inner detector re-selects
    it after every refinement of the common component. The selected columns
    are identically zero in phi~, so each refinement solves the common
    component on the remaining columns first, then fits the support
    coordinates to the stacked unprojected residual y - phi x~c.
    """
    check_consistent(measurements, sensing)
    _check_k(k, sensing.n_vars)
    if k >= sensing.m_per_step:
        raise DimensionError(
            f"ACIE needs k < M so the complement is nonempty, got k={k}, M={sensing.m_per_step}"
        )
    if iters < 1:
        raise DomainError(f"ACIE needs at least one iteration, got L={iters}")

    if initial_support is None:
        support = tecc(measurements, sensing, k, inner, lasso_config).estimated_set
    else:
        support = tuple(sorted(int(i) for i in initial_support))
        if len(support) != k:
            raise DimensionError(f"Initial support has {len(support)} indices, expected {k}")
    initial = support
    A, b = stack(sensing, measurements)

    projection: Optional[ComplementProjection] = None
    projected_for: Optional[Tuple[int, ...]] = None
    x_c = np.zeros(sensing.n_vars)
    rank_deficient_solves = 0
    complement_deficient = 0
    support_changes = 0

    for _ in range(iters):
        if projection is None or projected_for != support:
            projection = project_onto_complement(measurements, sensing, support)
            projected_for = support
            complement_deficient += projection.rank_deficient_steps

        keep = np.ones(sensing.n_vars, dtype=bool)
        keep[np.asarray(support) - 1] = False
        solution = least_squares(projection.phi_tilde[:, keep], projection.y_tilde)
        rank_deficient_solves += int(solution.rank_deficient)
        x_c = np.zeros(sensing.n_vars)
        x_c[keep] = solution.x
        on_support = least_squares(A[:, ~keep], b - A[:, keep] @ solution.x)
        rank_deficient_solves += int(on_support.rank_deficient)
        x_c[~keep] = on_support.x

        if reestimate:
            residual = subtract_common_component(measurements, sensing, x_c)
            updated = _run_inner(
                inner, residual.residual_measurements, sensing, k, lasso_config
            ).estimated_set
            support_changes += int(updated != support)
            support = updated

    if rank_deficient_solves or complement_deficient:
        logger.debug(
            f"ACIE rank deficiency: {rank_deficient_solves} solves, "
            f"{complement_deficient} complement steps"
        )

    common = subtract_common_component(measurements, sensing, x_c)
    result = _run_inner(inner, common.residual_measurements, sensing, k, lasso_config)
    return DetectionResult(
        estimated_set=result.estimated_set,
        scores=result.scores,
        algorithm=Algorithm.ACIE,
        diagnostics={
            "inner": inner.value,
            "iterations": iters,
            "initial_support": initial,
            "support_changes": support_changes,
            "rank_deficient_solves": rank_deficient_solves,
            "complement_rank_deficient_steps": complement_deficient,
            **result.diagnostics,
        },
        common=common,
    )


def estimate_k(scores: np.ndarray) -> int:
    """Position of the largest drop between consecutive sorted scores."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise DimensionError("estimate_k needs at least two scores")
    ordered = np.sort(scores)[::-1]
    gaps = ordered[:-1] - ordered[1:]
    if not np.any(gaps > 0):
        raise DegenerateScores("All scores are equal; no drop to locate")
    return int(np.argmax(gaps)) + 1


@dataclass(frozen=True)
class DetectorConfig:
    """Algorithm choice plus every tunable the five detectors accept."""

    algorithm: Algorithm = Algorithm.OSGA
    inner: Algorithm = Algorithm.OSGA
    iters: int = ACIE_ITERATIONS
    lam: Optional[float] = None
    tol: float = LASSO_TOL
    max_iters: int = LASSO_MAX_ITERS
    acceleration: bool = True
    reestimate: bool = False

    def __post_init__(self):
        if self.inner not in INNER_ALGORITHMS:
            raise ConfigError(
                f"Inner detector must be osga, somp or lasso, got {self.inner.value}",
                field="inner",
            )
        if self.iters < 1:
            raise ConfigError(f"L must be >= 1, got {self.iters}", field="L")
        # validates lam / tol / max_iters
        self.lasso_config

    @property
    def lasso_config(self) -> LassoConfig:
        try:
            return LassoConfig(
                lam=self.lam,
                max_iters=self.max_iters,
                tol=self.tol,
                acceleration=self.acceleration,
            )
        except DomainError as e:
            raise ConfigError(e.message, field="lambda/tol/max_iters")

    def run(
        self, measurements: MeasurementSet, sensing: SensingSequence, k: int
    ) -> DetectionResult:
        if self.algorithm is Algorithm.OSGA:
            return osga(measurements, sensing, k)
        if self.algorithm is Algorithm.SOMP:
            return mmv_somp(measurements, sensing, k)
        if self.algorithm is Algorithm.LASSO:
            return mmv_lasso(measurements, sensing, k, self.lasso_config)
        if self.algorithm is Algorithm.TECC:
            return tecc(measurements, sensing, k, self.inner, self.lasso_config)
        return acie(
            measurements,
            sensing,
            k,
            iters=self.iters,
            inner=self.inner,
            lasso_config=self.lasso_config,
            reestimate=self.reestimate,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm.value,
            "inner": self.inner.value,
            "L": self.iters,
            "lambda": self.lam,
            "tol": self.tol,
            "max_iters": self.max_iters,
            "acceleration": self.acceleration,
            "reestimate": self.reestimate,
        }
