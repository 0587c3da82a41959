"""
linalg.py - Dense linear-algebra and optimization kernels for the detectors

Modified Gram-Schmidt, orthonormal complements, least squares, power-iteration
spectral norms, soft-thresholding and a proximal-gradient LASSO solver.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .config import (
    LASSO_LAMBDA_FRACTION,
    LASSO_MAX_ITERS,
    LASSO_TOL,
    MGS_DROP_TOLERANCE,
    RANK_TOLERANCE,
    SPECTRAL_MAX_ITERS,
    SPECTRAL_RTOL,
    SPECTRAL_SAFETY_FACTOR,
)
from .errors import DimensionError, DomainError, NonConvergence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings; ``lam=None`` selects 0.1 * ||A^T b||_inf at solve time."""

    lam: Optional[float] = None
    max_iters: int = LASSO_MAX_ITERS
    tol: float = LASSO_TOL
    acceleration: bool = True

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True, eq=False)
class LassoSolution:
    coefficients: np.ndarray
    iterations_used: int
    final_objective: float
    kkt_residual: float
    lam: float
    converged: bool = True
    objective_history: Tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class Orthonormalization:
    basis: np.ndarray  # M x r, orthonormal columns
    dropped: Tuple[int, ...]  # input positions judged dependent


@dataclass(frozen=True, eq=False)
class Complement:
    basis: np.ndarray  # M x (M - rank)
    rank: int
    rank_deficient: bool


@dataclass(frozen=True, eq=False)
class LeastSquaresSolution:
    x: np.ndarray
    rank: int
    rank_deficient: bool
    residual_norm: float


def soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """Proximal operator of tau * ||.||_1: sign(v) * max(|v| - tau, 0)."""
    if tau < 0:
        raise DomainError(f"Threshold must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def spectral_norm_sq(
    A: np.ndarray,
    rtol: float = SPECTRAL_RTOL,
    max_iters: int = SPECTRAL_MAX_ITERS,
    safety: float = SPECTRAL_SAFETY_FACTOR,
) -> float:
    """Largest eigenvalue of A^T A by power iteration, times a safety factor."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or not np.any(A):
        raise DomainError("spectral_norm_sq needs a nonzero matrix")

    # fixed start vector keeps the estimate deterministic
    v = np.random.default_rng(0).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # start vector in the null space; restart along the largest column
            v = np.zeros(A.shape[1])
            v[int(np.argmax(np.linalg.norm(A, axis=0)))] = 1.0
            continue
        rayleigh = float(v @ w)
        converged = np.linalg.norm(w - rayleigh * v) <= rtol * rayleigh
        v = w / norm_w
        if converged:
            break
    # Rayleigh quotient at the final vector
    estimate = float(np.linalg.norm(A @ v) ** 2)
    return estimate * safety


def _objective(A: np.ndarray, b: np.ndarray, x: np.ndarray, lam: float) -> float:
    r = A @ x - b
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())


def kkt_residual(A: np.ndarray, b: np.ndarray, x: np.ndarray, lam: float) -> float:
    """Largest violation of the LASSO optimality conditions at x."""
    g = A.T @ (A @ x - b)
    nonzero = x != 0
    violation = np.where(
        nonzero,
        np.abs(g + lam * np.sign(x)),
        np.maximum(np.abs(g) - lam, 0.0),
    )
    return float(violation.max()) if violation.size else 0.0


def default_lambda(A: np.ndarray, b: np.ndarray) -> float:
    return LASSO_LAMBDA_FRACTION * float(np.abs(A.T @ b).max())


def lasso(A: np.ndarray, b: np.ndarray, config: Optional[LassoConfig] = None) -> LassoSolution:
    """Minimize 0.5 ||b - A x||^2 + lam ||x||_1 by proximal gradient.

    With ``acceleration`` the momentum variant is used in its monotone form:
    an iterate is accepted only if it lowers the objective, otherwise the
    momentum restarts from the previous point. Stops once the KKT residual is
    at most ``tol * (1 + ||A^T b||_inf)``.
    """
    config = config or LassoConfig()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise DimensionError(f"lasso needs A (R x N) and b (R), got {A.shape} and {b.shape}")

    lam = default_lambda(A, b) if config.lam is None else float(config.lam)
    step = 1.0 / spectral_norm_sq(A)
    Atb = A.T @ b
    threshold = config.tol * (1.0 + float(np.abs(Atb).max()))

    x = np.zeros(A.shape[1])
    objective = _objective(A, b, x, lam)
    history = [objective]
    momentum_point = x.copy()
    theta = 1.0
    residual = kkt_residual(A, b, x, lam)
    iterations = 0

    while residual > threshold and iterations < config.max_iters:
        iterations += 1
        base = momentum_point if config.acceleration else x
        gradient = A.T @ (A @ base) - Atb
        candidate = soft_threshold(base - step * gradient, step * lam)
        candidate_objective = _objective(A, b, candidate, lam)

        if not config.acceleration:
            x, objective = candidate, candidate_objective
        else:
            theta_next = (1.0 + np.sqrt(1.0 + 4.0 * theta * theta)) / 2.0
            # theta == 1 means base is x: a plain step, monotone up to rounding
            if candidate_objective <= objective or theta == 1.0:
                momentum_point = candidate + ((theta - 1.0) / theta_next) * (candidate - x)
                x, objective = candidate, candidate_objective
                theta = theta_next
            else:
                # restart: drop momentum, retry from x on the next pass
                momentum_point = x.copy()
                theta = 1.0
        history.append(objective)
        residual = kkt_residual(A, b, x, lam)

    solution = LassoSolution(
        coefficients=x,
        iterations_used=iterations,
        final_objective=objective,
        kkt_residual=residual,
        lam=lam,
        converged=residual <= threshold,
        objective_history=tuple(history),
    )
    if not solution.converged:
        logger.warning(
            f"LASSO stopped after {iterations} iterations with KKT residual {residual:.3e}"
        )
        raise NonConvergence(
            f"LASSO did not reach tolerance in {config.max_iters} iterations",
            solution=solution,
        )
    logger.debug(f"LASSO converged in {iterations} iterations, objective {objective:.6g}")
    return solution


def mgs_extend(
    basis: Sequence[np.ndarray],
    vectors: np.ndarray,
    drop_tolerance: float = MGS_DROP_TOLERANCE,
) -> Tuple[np.ndarray, np.ndarray]:
    """One modified Gram-Schmidt step over a batch.

    ``vectors`` is (B, M); each entry of ``basis`` is a (B, M) batch of unit
    vectors (or zero rows), mutually orthogonal per batch row. Returns the
    normalized projections and a (B,) mask of rows judged dependent; dropped
    rows come back as zeros. Projection runs twice to hold orthogonality at
    working precision.
    """
    w = np.array(vectors, dtype=float, copy=True)
    original = np.linalg.norm(w, axis=1)
    for _ in range(2):
        for q in basis:
            w -= np.sum(q * w, axis=1)[:, None] * q
    remaining = np.linalg.norm(w, axis=1)
    dropped = (original == 0.0) | (remaining <= drop_tolerance * original)
    safe = np.where(dropped, 1.0, remaining)
    unit = np.where(dropped[:, None], 0.0, w / safe[:, None])
    return unit, dropped


def mgs_orthonormalize(
    columns: Union[np.ndarray, Sequence[np.ndarray]],
    drop_tolerance: float = MGS_DROP_TOLERANCE,
) -> Orthonormalization:
    """Modified Gram-Schmidt over a list of vectors (or the columns of a matrix).

    A vector whose norm after projection falls to ``drop_tolerance`` times its
    original norm or below is dropped and its input position reported.
    """
    if isinstance(columns, np.ndarray) and columns.ndim == 2:
        vectors = [columns[:, j] for j in range(columns.shape[1])]
    else:
        vectors = [np.asarray(c, dtype=float) for c in columns]
    if not vectors:
        return Orthonormalization(basis=np.zeros((0, 0)), dropped=())

    length = vectors[0].shape[0]
    if any(v.shape != (length,) for v in vectors):
        raise DimensionError("All vectors must have the same length")

    basis: list = []
    dropped = []
    for j, vector in enumerate(vectors):
        unit, is_dropped = mgs_extend(basis, vector[None, :], drop_tolerance)
        if is_dropped[0]:
            dropped.append(j)
            continue
        basis.append(unit)

    if dropped:
        logger.debug(f"Gram-Schmidt dropped dependent vectors at positions {dropped}")
    stacked = np.column_stack([q[0] for q in basis]) if basis else np.zeros((length, 0))
    return Orthonormalization(basis=stacked, dropped=tuple(dropped))


def _numerical_rank(diagonal: np.ndarray, reference: float) -> int:
    if reference == 0.0:
        return 0
    return int(np.sum(np.abs(diagonal) > RANK_TOLERANCE * reference))


def orthonormal_complement(A: np.ndarray) -> Complement:
    """Orthonormal basis of the orthogonal complement of range(A) in R^M.

    Uses a full column-pivoted QR; the trailing M - rank columns of Q span the
    complement.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    M, k = A.shape
    if k >= M:
        raise DimensionError(f"Complement needs fewer columns than rows, got {M} x {k}")
    if k == 0:
        return Complement(basis=np.eye(M), rank=0, rank_deficient=False)

    Q, R, _ = scipy.linalg.qr(A, mode="full", pivoting=True)
    diagonal = np.diag(R)
    rank = _numerical_rank(diagonal, abs(diagonal[0]) if diagonal.size else 0.0)
    deficient = rank < k
    if deficient:
        logger.warning(f"Complement input has rank {rank} < {k} columns")
    return Complement(basis=Q[:, rank:], rank=rank, rank_deficient=deficient)


def least_squares(A: np.ndarray, b: np.ndarray) -> LeastSquaresSolution:
    """Minimum-norm minimizer of ||A x - b||_2 via an SVD-based solver.

    Fewer rows than columns is accepted and reported as rank deficient.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise DimensionError(f"least_squares needs A (R x C) and b (R), got {A.shape}, {b.shape}")
    R, C = A.shape
    if C == 0:
        return LeastSquaresSolution(np.zeros(0), 0, False, float(np.linalg.norm(b)))

    scale = float(np.abs(A).max()) if A.size else 0.0
    x, _, rank, _ = scipy.linalg.lstsq(
        A, b, cond=RANK_TOLERANCE if scale else None, lapack_driver="gelsd"
    )
    rank = int(rank)
    deficient = rank < C
    if deficient:
        logger.debug(f"least_squares: rank {rank} < {C} columns, returning minimum-norm solution")
    residual = float(np.linalg.norm(A @ x - b))
    return LeastSquaresSolution(x=x, rank=rank, rank_deficient=deficient, residual_norm=residual)
