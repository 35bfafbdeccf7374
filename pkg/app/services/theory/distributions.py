"""
Pair distributions over (audio, text) pairs.

The joint distribution spreads mass over all N*K pairs of a corpus. The epoch
distribution of the random-language baseline only covers the N pairs (i, q_i) picked
by that epoch's plan. Supports are (instance, language) rows in i-major order, the
same order `pair_loss_grads` uses.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from ...errors import DimensionMismatchError, InvalidPlanError, SupportMismatchError
from ...models import LossConfig
from ..datagen import Corpus
from ..encoders import EncoderParams, encode_audio_batch, encode_text_batch
from ..numerics import normalize_rows
from ..training.losses import EpochLanguagePlan

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-10


@dataclass(frozen=True)
class DistributionSnapshot:
    support: np.ndarray  # (P, 2) rows of (instance, language)
    mass: np.ndarray  # (P,)

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64).reshape(-1, 2)
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.shape != (support.shape[0],):
            raise DimensionMismatchError(f"{mass.size} masses for a support of {support.shape[0]} pairs")
        if np.any(mass < 0) or abs(float(mass.sum()) - 1.0) > MASS_TOLERANCE:
            raise ValueError("distribution masses must be nonnegative and sum to 1")
        support.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    def __len__(self) -> int:
        return int(self.mass.size)


def snapshot_from_scores(support: np.ndarray, scores: np.ndarray, tau: float) -> DistributionSnapshot:
    """mass proportional to exp(score / tau) over the given support."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return DistributionSnapshot(support=support, mass=softmax(np.asarray(scores, dtype=np.float64) / tau))


def _pair_snapshot(
    params: EncoderParams, corpus: Corpus, instances: np.ndarray, languages: np.ndarray, cfg: LossConfig
) -> DistributionSnapshot:
    if corpus.n_instances == 0:
        raise DimensionMismatchError("cannot build a pair distribution over an empty corpus")
    audio_hat, _ = normalize_rows(encode_audio_batch(params, corpus.audio), "audio embedding")
    text_hat, _ = normalize_rows(encode_text_batch(params, corpus.text[instances, languages]), "text embedding")
    scores = np.sum(audio_hat[instances] * text_hat, axis=1)
    return snapshot_from_scores(np.stack([instances, languages], axis=1), scores, cfg.tau)


def all_pairs(n_instances: int, n_languages: int) -> np.ndarray:
    instances = np.repeat(np.arange(n_instances), n_languages)
    languages = np.tile(np.arange(n_languages), n_instances)
    return np.stack([instances, languages], axis=1)


def joint_distribution(params: EncoderParams, corpus: Corpus, cfg: LossConfig) -> DistributionSnapshot:
    pairs = all_pairs(corpus.n_instances, corpus.n_languages)
    return _pair_snapshot(params, corpus, pairs[:, 0], pairs[:, 1], cfg)


def epoch_distribution(
    params: EncoderParams, corpus: Corpus, plan: EpochLanguagePlan, cfg: LossConfig
) -> DistributionSnapshot:
    if len(plan) != corpus.n_instances or plan.n_languages != corpus.n_languages:
        raise InvalidPlanError(
            f"plan covers {len(plan)} instances over {plan.n_languages} languages; "
            f"corpus has {corpus.n_instances} over {corpus.n_languages}"
        )
    return _pair_snapshot(params, corpus, np.arange(corpus.n_instances), plan.q, cfg)


def kcl_epoch_distribution(params: EncoderParams, corpus: Corpus, cfg: LossConfig) -> DistributionSnapshot:
    """An epoch of 1-to-K training visits every pair, so its distribution is built exactly like the joint one."""
    pairs = all_pairs(corpus.n_instances, corpus.n_languages)
    return _pair_snapshot(params, corpus, pairs[:, 0], pairs[:, 1], cfg)


def zero_extend(p: DistributionSnapshot, pe: DistributionSnapshot) -> np.ndarray:
    """pe's masses laid out on p's support, zero where pe has no pair."""
    index = {(int(i), int(k)): row for row, (i, k) in enumerate(p.support)}
    extended = np.zeros(len(p))
    for (i, k), mass in zip(pe.support, pe.mass):
        row = index.get((int(i), int(k)))
        if row is None:
            raise SupportMismatchError(f"pair ({int(i)}, {int(k)}) is not in the reference support")
        extended[row] += mass
    return extended


def distribution_error(p: DistributionSnapshot, pe: DistributionSnapshot) -> float:
    """L1 distance between p and pe zero-extended onto p's support; lies in [0, 2]."""
    return float(np.sum(np.abs(p.mass - zero_extend(p, pe))))


def kcl_epoch_distribution_error(params: EncoderParams, corpus: Corpus, cfg: LossConfig) -> float:
    error = distribution_error(joint_distribution(params, corpus, cfg), kcl_epoch_distribution(params, corpus, cfg))
    logger.debug(f"1-to-K epoch distribution error: {error}")
    return error
