"""
model.py - Statistical problem definition and data generation

Defines the prevalent/anomalous Gaussian setup, draws JSM-2R and JSM-3R signal
ensembles and Gaussian sensing sequences, and forms the mixed measurements
y_t = phi_t x_(.,t). Index sets are 1-based everywhere outside this module's
private helpers.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from .config import RNG_ALGORITHM
from .errors import ConfigError, DimensionError, DomainError, ModelMismatch

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1


class SignalModel(str, Enum):
    JSM2R = "jsm2r"
    JSM3R = "jsm3r"

    @classmethod
    def parse(cls, value: str) -> "SignalModel":
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigError(
                f"Unknown signal model {value!r} (expected one of: {choices})",
                field="model",
            )


class SeededRng:
    """Seeded random stream with keyed, independent children.

    The stream for ``(seed, key)`` is ``PCG64(SeedSequence(seed, spawn_key=key))``
    and normals use numpy's ziggurat transform, so a given seed and key yield the
    same draws on every platform. Trials use keys such as ``(m, t, k, trial)``.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        self.seed = int(seed) & _SEED_MASK
        self.key = tuple(int(part) for part in key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, *key: int) -> "SeededRng":
        """Independent child stream; does not consume draws from this one."""
        return SeededRng(self.seed, self.key + tuple(key))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self.key})"


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise DomainError(
                f"Gaussian parameters must be finite: ({self.mean}, {self.variance})"
            )
        if self.variance < 0:
            raise DomainError(f"Variance must be nonnegative, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class ProblemTemplate:
    """Everything in a ProblemSpec except K and the anomaly set."""

    n_vars: int
    prevalent: GaussianSpec
    anomalous: GaussianSpec
    model: SignalModel

    def instantiate(self, anomaly_set: Iterable[int]) -> "ProblemSpec":
        indices = tuple(anomaly_set)
        return ProblemSpec(
            n_vars=self.n_vars,
            n_anomalies=len(indices),
            anomaly_set=indices,
            prevalent=self.prevalent,
            anomalous=self.anomalous,
            model=self.model,
        )

    def with_anomalous(self, anomalous: GaussianSpec) -> "ProblemTemplate":
        return ProblemTemplate(self.n_vars, self.prevalent, anomalous, self.model)


@dataclass(frozen=True)
class ProblemSpec:
    n_vars: int
    n_anomalies: int
    anomaly_set: Tuple[int, ...]
    prevalent: GaussianSpec
    anomalous: GaussianSpec
    model: SignalModel

    def __post_init__(self):
        object.__setattr__(self, "anomaly_set", tuple(int(i) for i in self.anomaly_set))
        _check_counts(self.n_vars, self.n_anomalies)
        if len(self.anomaly_set) != self.n_anomalies:
            raise DimensionError(
                f"Anomaly set has {len(self.anomaly_set)} indices, expected K={self.n_anomalies}"
            )
        if any(b <= a for a, b in zip(self.anomaly_set, self.anomaly_set[1:])):
            raise DimensionError("Anomaly set must be sorted and duplicate-free")
        if self.anomaly_set[0] < 1 or self.anomaly_set[-1] > self.n_vars:
            raise DimensionError(f"Anomaly indices must lie in [1, {self.n_vars}]")

    @property
    def template(self) -> ProblemTemplate:
        return ProblemTemplate(self.n_vars, self.prevalent, self.anomalous, self.model)

    def anomaly_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vars, dtype=bool)
        mask[np.asarray(self.anomaly_set) - 1] = True
        return mask

    def expected_values(self) -> np.ndarray:
        """E[X] per variable (the JSM-3R common component)."""
        return np.where(self.anomaly_mask(), self.anomalous.mean, self.prevalent.mean)


@dataclass(frozen=True, eq=False)
class SignalEnsemble:
    """N x T realization matrix; column t is the signal at time-step t."""

    values: np.ndarray
    spec: ProblemSpec
    common_component: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[0] != self.spec.n_vars:
            raise DimensionError(
                f"Signal matrix shape {values.shape} does not match N={self.spec.n_vars}"
            )
        if values.shape[1] < 1:
            raise DimensionError("Signal ensemble needs at least one time-step")
        if not np.all(np.isfinite(values)):
            raise DomainError("Signal entries must be finite")
        object.__setattr__(self, "values", values)
        if self.common_component is not None:
            object.__setattr__(self, "common_component", _frozen(self.common_component))

    @property
    def n_steps(self) -> int:
        return int(self.values.shape[1])

    @property
    def innovation(self) -> Optional[np.ndarray]:
        if self.common_component is None:
            return None
        return self.values - self.common_component[:, None]


@dataclass(frozen=True, eq=False)
class SensingSequence:
    """T sensing matrices stored as a (T, M, N) array."""

    matrices: np.ndarray

    def __post_init__(self):
        matrices = _frozen(self.matrices)
        if matrices.ndim != 3 or 0 in matrices.shape:
            raise DimensionError(
                f"Sensing sequence must be a nonempty (T, M, N) array, got {matrices.shape}"
            )
        object.__setattr__(self, "matrices", matrices)

    @property
    def n_steps(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def m_per_step(self) -> int:
        return int(self.matrices.shape[1])

    @property
    def n_vars(self) -> int:
        return int(self.matrices.shape[2])


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """T measurement vectors stored as a (T, M) array."""

    vectors: np.ndarray

    def __post_init__(self):
        vectors = _frozen(self.vectors)
        if vectors.ndim != 2 or 0 in vectors.shape:
            raise DimensionError(
                f"Measurements must be a nonempty (T, M) array, got {vectors.shape}"
            )
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_steps(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def m_per_step(self) -> int:
        return int(self.vectors.shape[1])


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def _check_counts(n_vars: int, n_anomalies: int) -> None:
    if n_anomalies < 1 or n_anomalies >= n_vars:
        raise DimensionError(
            f"Need 1 <= K < N, got N={n_vars}, K={n_anomalies}"
        )


def _check_positive(**dims: int) -> None:
    for name, value in dims.items():
        if int(value) < 1:
            raise DimensionError(f"{name} must be >= 1, got {value}")


def sample_anomaly_set(n_vars: int, n_anomalies: int, rng: SeededRng) -> Tuple[int, ...]:
    """Uniformly random K-subset of {1..N}, sorted ascending."""
    _check_counts(n_vars, n_anomalies)
    chosen = rng.generator.choice(n_vars, size=n_anomalies, replace=False)
    return tuple(int(i) + 1 for i in np.sort(chosen))


def _draw_rows(spec: ProblemSpec, n_steps: int, rng: SeededRng) -> Tuple[np.ndarray, np.ndarray]:
    _check_positive(T=n_steps)
    mask = spec.anomaly_mask()
    means = np.where(mask, spec.anomalous.mean, spec.prevalent.mean)
    stds = np.where(mask, spec.anomalous.std, spec.prevalent.std)
    noise = rng.generator.standard_normal((spec.n_vars, n_steps))
    # zero variance gives exactly the mean
    return means, means[:, None] + stds[:, None] * noise


def generate_jsm2r(spec: ProblemSpec, n_steps: int, rng: SeededRng) -> SignalEnsemble:
    """JSM-2R ensemble: x_(n,t) ~ D2 for n in the anomaly set, D1 otherwise, all i.i.d."""
    if spec.model is not SignalModel.JSM2R:
        raise ModelMismatch(
            f"generate_jsm2r called with a {spec.model.value} problem",
            expected=SignalModel.JSM2R.value,
        )
    _, values = _draw_rows(spec, n_steps, rng)
    return SignalEnsemble(values=values, spec=spec)


def generate_jsm3r(spec: ProblemSpec, n_steps: int, rng: SeededRng) -> SignalEnsemble:
    """JSM-3R ensemble: common component (the row mean) plus zero-mean innovation."""
    if spec.model is not SignalModel.JSM3R:
        raise ModelMismatch(
            f"generate_jsm3r called with a {spec.model.value} problem",
            expected=SignalModel.JSM3R.value,
        )
    common, values = _draw_rows(spec, n_steps, rng)
    return SignalEnsemble(values=values, spec=spec, common_component=common)


def generate(spec: ProblemSpec, n_steps: int, rng: SeededRng) -> SignalEnsemble:
    if spec.model is SignalModel.JSM2R:
        return generate_jsm2r(spec, n_steps, rng)
    return generate_jsm3r(spec, n_steps, rng)


def draw_sensing(
    m_per_step: int, n_vars: int, n_steps: int, rng: SeededRng
) -> SensingSequence:
    """T independent M x N matrices with i.i.d. N(0, 1) entries."""
    _check_positive(M=m_per_step, N=n_vars, T=n_steps)
    matrices = rng.generator.standard_normal((n_steps, m_per_step, n_vars))
    return SensingSequence(matrices)


def measure(sensing: SensingSequence, signals: SignalEnsemble) -> MeasurementSet:
    """y_t = phi_t x_(.,t), one dense matrix-vector product per time-step."""
    if sensing.n_vars != signals.spec.n_vars:
        raise DimensionError(
            f"Sensing has {sensing.n_vars} columns but the signal has N={signals.spec.n_vars}"
        )
    if sensing.n_steps != signals.n_steps:
        raise DimensionError(
            f"Sensing has {sensing.n_steps} steps but the signal has T={signals.n_steps}"
        )
    vectors = np.empty((sensing.n_steps, sensing.m_per_step))
    for t in range(sensing.n_steps):
        vectors[t] = sensing.matrices[t] @ signals.values[:, t]
    return MeasurementSet(vectors)


def check_consistent(measurements: MeasurementSet, sensing: SensingSequence) -> None:
    if measurements.n_steps != sensing.n_steps:
        raise DimensionError(
            f"{measurements.n_steps} measurement vectors for {sensing.n_steps} sensing matrices"
        )
    if measurements.m_per_step != sensing.m_per_step:
        raise DimensionError(
            f"Measurement length {measurements.m_per_step} does not match M={sensing.m_per_step}"
        )


def stack(
    sensing: SensingSequence, measurements: MeasurementSet
) -> Tuple[np.ndarray, np.ndarray]:
    """Vertical concatenation in time order: rows (t-1)M+1..tM hold step t."""
    check_consistent(measurements, sensing)
    T, M, N = sensing.matrices.shape
    return sensing.matrices.reshape(T * M, N), measurements.vectors.reshape(T * M)
