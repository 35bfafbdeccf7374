"""
Retrieval and cross-lingual consistency metrics.

T2A: the text of instance i in language k queries all audio of the split.
A2T: audio i queries the texts of one language k.
Ranks are 1-based; tied candidates are ordered by ascending index.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ...errors import DimensionMismatchError, LanguageIndexError
from ...models import Direction, LanguageMetrics, MetricsReport
from ..datagen import Corpus
from ..encoders import EncoderParams, encode_audio_batch, encode_text_batch
from ..numerics import sim_matrix

logger = logging.getLogger(__name__)

DIRECTIONS: Tuple[Direction, ...] = ("T2A", "A2T")
MAP_CUTOFF = 10


@dataclass(frozen=True)
class RankTable:
    direction: Direction
    ranks: np.ndarray  # (N, K), ranks[i, k] = rank of the true item for query (i, k)

    @property
    def n_candidates(self) -> int:
        return self.ranks.shape[0]


def true_item_ranks(sims: np.ndarray) -> np.ndarray:
    """Rank of candidate i for query row i: 1 + #higher + #equal with a smaller index."""
    target = np.diag(sims)[:, None]
    before = np.tri(sims.shape[0], k=-1, dtype=bool)
    higher = np.sum(sims > target, axis=1)
    tied_before = np.sum((sims == target) & before, axis=1)
    return 1 + higher + tied_before


def _embed(params: EncoderParams, corpus: Corpus) -> Tuple[np.ndarray, np.ndarray]:
    if corpus.n_instances == 0:
        raise DimensionMismatchError("cannot evaluate an empty split")
    audio = encode_audio_batch(params, corpus.audio)
    texts = np.stack([encode_text_batch(params, corpus.text[:, k, :]) for k in range(corpus.n_languages)], axis=1)
    return audio, texts


def _rank_table(audio: np.ndarray, texts: np.ndarray, direction: Direction) -> RankTable:
    columns = []
    for k in range(texts.shape[1]):
        if direction == "T2A":
            sims = sim_matrix(texts[:, k, :], audio)
        else:
            sims = sim_matrix(audio, texts[:, k, :])
        columns.append(true_item_ranks(sims))
    return RankTable(direction=direction, ranks=np.stack(columns, axis=1))


def rank_table(params: EncoderParams, corpus: Corpus, direction: Direction) -> RankTable:
    audio, texts = _embed(params, corpus)
    return _rank_table(audio, texts, direction)


def recall_at_k(table: RankTable, k: int) -> np.ndarray:
    """Per-language fraction of queries whose true item ranks within the top k."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return np.mean(table.ranks <= k, axis=0)


def map10(table: RankTable) -> np.ndarray:
    """Per-language mean of 1/rank, counting only ranks within the top 10."""
    precision = np.where(table.ranks <= MAP_CUTOFF, 1.0 / table.ranks, 0.0)
    return np.mean(precision, axis=0)


def mean_rank_variance(table: RankTable) -> float:
    ranks = table.ranks.astype(np.float64)
    return float(np.mean((ranks - ranks.mean(axis=1, keepdims=True)) ** 2))


def _check_language(texts: np.ndarray, k: int) -> None:
    n_languages = texts.shape[1]
    if n_languages < 2:
        raise LanguageIndexError("gap metrics need at least two languages")
    if not 0 < k < n_languages:
        raise LanguageIndexError(f"language {k} must be a non-English index in [1, {n_languages - 1}]")


def _gap(texts: np.ndarray, k: int) -> np.ndarray:
    _check_language(texts, k)
    return texts[:, 0, :].mean(axis=0) - texts[:, k, :].mean(axis=0)


def _distance(texts: np.ndarray, k: int) -> float:
    _check_language(texts, k)
    return float(np.mean(np.linalg.norm(texts[:, 0, :] - texts[:, k, :], axis=1)))


def embedding_gap(params: EncoderParams, corpus: Corpus, k: int) -> Tuple[np.ndarray, float]:
    """Mean English text embedding minus mean language-k text embedding, and its L2 norm."""
    _, texts = _embed(params, corpus)
    gap = _gap(texts, k)
    return gap, float(np.linalg.norm(gap))


def embedding_distance(params: EncoderParams, corpus: Corpus, k: int) -> float:
    _, texts = _embed(params, corpus)
    return _distance(texts, k)


def evaluate(params: EncoderParams, corpus: Corpus) -> MetricsReport:
    audio, texts = _embed(params, corpus)
    names = list(corpus.language_names)
    per_language: List[LanguageMetrics] = []
    average: Dict[str, Dict[str, float]] = {}
    mrv: Dict[str, float] = {}
    for direction in DIRECTIONS:
        table = _rank_table(audio, texts, direction)
        scores = {
            "r_at_1": recall_at_k(table, 1),
            "r_at_5": recall_at_k(table, 5),
            "r_at_10": recall_at_k(table, 10),
            "map10": map10(table),
        }
        for k, name in enumerate(names):
            per_language.append(
                LanguageMetrics(language=name, direction=direction, **{key: float(value[k]) for key, value in scores.items()})
            )
        average[direction] = {key: float(np.mean(value)) for key, value in scores.items()}
        mrv[direction] = mean_rank_variance(table)

    gap_norm, dis = {}, {}
    for k in range(1, corpus.n_languages):
        gap_norm[names[k]] = float(np.linalg.norm(_gap(texts, k)))
        dis[names[k]] = _distance(texts, k)

    logger.info(
        f"Evaluated {corpus.n_instances} instances: avg R@1 T2A={average['T2A']['r_at_1']:.3f} "
        f"A2T={average['A2T']['r_at_1']:.3f}, MRV={mrv['T2A']:.3f}"
    )
    return MetricsReport(
        languages=names,
        per_language=per_language,
        average=average,
        gap_norm=gap_norm,
        dis=dis,
        mrv=mrv["T2A"],
        mrv_a2t=mrv["A2T"],
    )
