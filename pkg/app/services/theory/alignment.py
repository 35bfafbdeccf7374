"""Optimal alignment direction for one audio embedding against its K language texts."""
import logging
from typing import Optional, Sequence

import numpy as np

from ...errors import DimensionMismatchError
from ..numerics import cosine_sim

logger = logging.getLogger(__name__)


def _stack(texts: Sequence[Sequence[float]]) -> np.ndarray:
    if len(texts) == 0:
        raise DimensionMismatchError("need at least one text embedding")
    try:
        stacked = np.asarray(texts, dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatchError("text embeddings must share one dimension") from exc
    if stacked.ndim != 2 or stacked.shape[1] == 0:
        raise DimensionMismatchError(f"text embeddings must form a (K, d) array, got shape {stacked.shape}")
    return stacked


def optimal_alignment(texts: Sequence[Sequence[float]]) -> np.ndarray:
    """Minimizer of sum_k ||a - t_k||^2, i.e. the arithmetic mean of the texts."""
    return _stack(texts).mean(axis=0)


def optimal_alignment_descent(
    texts: Sequence[Sequence[float]],
    seed: int = 0,
    learning_rate: Optional[float] = None,
    tolerance: float = 1e-12,
    max_iterations: int = 10_000,
) -> np.ndarray:
    """
    Gradient descent on sum_k ||a - t_k||^2 from a random start.

    The gradient is 2 * sum_k (a - t_k); the default step 0.25 / K halves the distance
    to the minimizer every iteration.
    """
    t = _stack(texts)
    k = t.shape[0]
    lr = 0.25 / k if learning_rate is None else learning_rate
    a = np.random.default_rng(seed).normal(size=t.shape[1])
    for iteration in range(max_iterations):
        grad = 2.0 * np.sum(a[None, :] - t, axis=0)
        if np.linalg.norm(grad) <= tolerance:
            break
        a = a - lr * grad
    else:
        logger.warning(f"Alignment descent stopped after {max_iterations} iterations without converging")
        return a
    logger.debug(f"Alignment descent converged in {iteration} iterations")
    return a


def alignment_direction_error(texts: Sequence[Sequence[float]], language: int) -> float:
    """Angle in radians between one language's text embedding and the optimal mean direction."""
    t = _stack(texts)
    if not 0 <= language < t.shape[0]:
        raise DimensionMismatchError(f"language {language} out of range for {t.shape[0]} texts")
    return float(np.arccos(cosine_sim(t[language], t.mean(axis=0))))
