"""SGD and Adam over flat weight vectors, with optional gradient-norm clipping."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ...errors import DimensionMismatchError
from ...models import OptimizerConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


def _check_lengths(w: np.ndarray, g: np.ndarray) -> None:
    if w.shape != g.shape or w.ndim != 1:
        raise DimensionMismatchError(f"Weight vector {w.shape} and gradient {g.shape} do not match")


def clip_gradient(g: np.ndarray, clip_norm: Optional[float]) -> np.ndarray:
    """g * min(1, clip_norm / ||g||); a projection onto the clip_norm ball."""
    if clip_norm is None:
        return g
    norm = float(np.linalg.norm(g))
    if norm <= clip_norm:
        return g
    return g * (clip_norm / norm)


def sgd_step(w: np.ndarray, g: np.ndarray, cfg: OptimizerConfig) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_lengths(w, g)
    return w - cfg.eta * clip_gradient(g, cfg.clip_norm)


def adam_step(w: np.ndarray, g: np.ndarray, state: AdamState, cfg: OptimizerConfig) -> Tuple[np.ndarray, AdamState]:
    """
    m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g*g;  w -= eta * m_hat / (sqrt(v_hat) + eps).

    Descends the loss; the momentum-error analysis is written for ascent on log p, which
    only flips the sign of g and leaves every norm unchanged.
    """
    w = np.asarray(w, dtype=np.float64)
    g = clip_gradient(np.asarray(g, dtype=np.float64), cfg.clip_norm)
    _check_lengths(w, g)
    if state.m.shape != w.shape or state.v.shape != w.shape:
        raise DimensionMismatchError(f"Adam state of length {state.m.size} for a weight vector of length {w.size}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (g * g)
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    w_new = w - cfg.eta * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
    return w_new, AdamState(m=m, v=v, t=t)


class Optimizer:
    """Owns the optimizer state for one training loop."""

    def __init__(self, cfg: OptimizerConfig, size: int) -> None:
        self.cfg = cfg
        self.state: Optional[AdamState] = AdamState.fresh(size) if cfg.kind == "adam" else None

    def step(self, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.cfg.kind == "sgd":
            return sgd_step(w, g, self.cfg)
        w_new, self.state = adam_step(w, g, self.state, self.cfg)
        return w_new
