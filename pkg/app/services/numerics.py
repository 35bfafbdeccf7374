"""Vector primitives shared by every other service: cosine similarity, stable log-softmax, RNG streams."""
import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.special import log_softmax

from ..errors import DegenerateEmbeddingError, DimensionMismatchError

logger = logging.getLogger(__name__)

# Stable ids for the named random streams; adding a stream must not renumber the others.
RNG_STREAMS = {
    "corpus": 0,
    "split": 1,
    "init": 2,
    "plan": 3,
    "batch": 4,
    "lipschitz": 5,
}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named stream of a run seed."""
    if name not in RNG_STREAMS:
        raise KeyError(f"Unknown random stream '{name}'")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(RNG_STREAMS[name],)))


def derive_seed(seed: int, name: str) -> int:
    """Integer seed drawn from a named stream, for components that take a plain seed."""
    return int(rng_stream(seed, name).integers(0, 2**31 - 1))


def as_embedding(values: Sequence[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatchError(f"Embedding must be a nonempty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise DegenerateEmbeddingError("Embedding contains non-finite entries")
    return vec


def cosine_sim(u: Sequence[float], v: Sequence[float]) -> float:
    u, v = as_embedding(u), as_embedding(v)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"Cannot compare embeddings of dim {u.size} and {v.size}")
    nu, nv = np.sqrt(np.sum(u * u)), np.sqrt(np.sum(v * v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateEmbeddingError("Zero-norm embedding passed to cosine_sim", index=0 if nu == 0.0 else 1)
    return float(np.clip(np.sum(u * v) / (nu * nv), -1.0, 1.0))


def row_norms(x: np.ndarray, what: str = "embedding") -> np.ndarray:
    """L2 norm of every row; raises on the first zero row, reporting its index."""
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateEmbeddingError(f"Zero-norm {what} at index {int(zero[0])}", index=int(zero[0]))
    return norms


def normalize_rows(x: np.ndarray, what: str = "embedding") -> Tuple[np.ndarray, np.ndarray]:
    norms = row_norms(x, what)
    return x / norms[:, None], norms


def normalize_rows_backward(x_hat: np.ndarray, norms: np.ndarray, d_hat: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw rows given the gradient w.r.t. their unit-normalized versions."""
    radial = np.sum(x_hat * d_hat, axis=1, keepdims=True)
    return (d_hat - x_hat * radial) / norms[:, None]


def sim_matrix(queries: Sequence[Sequence[float]], candidates: Sequence[Sequence[float]]) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    c = np.asarray(candidates, dtype=np.float64)
    if q.ndim != 2 or c.ndim != 2 or q.shape[0] == 0 or c.shape[0] == 0:
        raise DimensionMismatchError("sim_matrix needs two nonempty lists of vectors")
    if q.shape[1] != c.shape[1]:
        raise DimensionMismatchError(f"Query dim {q.shape[1]} != candidate dim {c.shape[1]}")
    # Elementwise products summed over the last axis, the same reduction cosine_sim uses.
    nq = np.sqrt(np.sum(q * q, axis=1))
    nc = np.sqrt(np.sum(c * c, axis=1))
    for label, norms in (("query", nq), ("candidate", nc)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateEmbeddingError(f"Zero-norm {label} at index {int(zero[0])}", index=int(zero[0]))
    dots = np.sum(q[:, None, :] * c[None, :, :], axis=2)
    return np.clip(dots / (nq[:, None] * nc[None, :]), -1.0, 1.0)


def log_softmax_row(scores: Sequence[float], tau: float) -> np.ndarray:
    """log softmax(scores / tau), max-shifted so exp never overflows."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return log_softmax(s / tau)
