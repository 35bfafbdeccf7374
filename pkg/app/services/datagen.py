"""Synthetic multilingual paired corpora from a shared latent-factor model."""
import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ..errors import DimensionMismatchError
from ..models import CorpusConfig, SplitFractions

logger = logging.getLogger(__name__)

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}
DEFAULT_LANGUAGE_NAMES = ("eng", "fra", "deu", "spa", "nld", "cat", "jpn", "zho")


def language_names(n_languages: int) -> Tuple[str, ...]:
    """English first; then the usual seven companions, then lang{k}."""
    return tuple(
        DEFAULT_LANGUAGE_NAMES[k] if k < len(DEFAULT_LANGUAGE_NAMES) else f"lang{k}" for k in range(n_languages)
    )


@dataclass(frozen=True)
class Corpus:
    audio: np.ndarray  # (N, d_audio)
    text: np.ndarray  # (N, K, d_text)
    language_names: Tuple[str, ...]
    split: np.ndarray = field(default=None)  # (N,) uint8, 0 train / 1 val / 2 test

    def __post_init__(self) -> None:
        audio = np.asarray(self.audio, dtype=np.float64)
        text = np.asarray(self.text, dtype=np.float64)
        if audio.ndim != 2 or text.ndim != 3 or text.shape[0] != audio.shape[0]:
            raise DimensionMismatchError(
                f"Corpus needs audio (N, d_audio) and text (N, K, d_text), got {audio.shape} and {text.shape}"
            )
        if len(self.language_names) != text.shape[1]:
            raise DimensionMismatchError(f"{len(self.language_names)} language names for K={text.shape[1]}")
        split = np.zeros(audio.shape[0], dtype=np.uint8) if self.split is None else np.asarray(self.split, dtype=np.uint8)
        if split.shape != (audio.shape[0],):
            raise DimensionMismatchError(f"Split tags have shape {split.shape}, expected ({audio.shape[0]},)")
        for array in (audio, text, split):
            array.setflags(write=False)
        object.__setattr__(self, "audio", audio)
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "language_names", tuple(self.language_names))

    @property
    def n_instances(self) -> int:
        return self.audio.shape[0]

    @property
    def n_languages(self) -> int:
        return self.text.shape[1]

    @property
    def d_audio(self) -> int:
        return self.audio.shape[1]

    @property
    def d_text(self) -> int:
        return self.text.shape[2]

    def take(self, indices: Sequence[int]) -> "Corpus":
        idx = np.asarray(indices, dtype=np.int64)
        return Corpus(audio=self.audio[idx], text=self.text[idx], language_names=self.language_names, split=self.split[idx])

    def subset(self, split: str) -> "Corpus":
        if split == "all":
            return self
        return self.take(np.flatnonzero(self.split == SPLIT_CODES[split]))

    def with_split(self, split: np.ndarray) -> "Corpus":
        return Corpus(audio=self.audio, text=self.text, language_names=self.language_names, split=split)

    def equals(self, other: "Corpus") -> bool:
        return (
            self.language_names == other.language_names
            and np.array_equal(self.audio, other.audio)
            and np.array_equal(self.text, other.text)
            and np.array_equal(self.split, other.split)
        )


def generate_corpus(cfg: CorpusConfig) -> Corpus:
    """
    a_i = A z_i + eps_audio and t_ik = T z_i + scale * o_k + eps_k.

    The random maps A, T and offsets o_k are drawn first and shared by all instances,
    so the draw order (and therefore every byte) depends only on cfg.
    """
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n_instances, cfg.n_languages

    audio_map = rng.normal(size=(cfg.d_audio, cfg.d_latent)) / np.sqrt(cfg.d_latent)
    text_map = rng.normal(size=(cfg.d_text, cfg.d_latent)) / np.sqrt(cfg.d_latent)
    offsets = rng.normal(size=(k, cfg.d_text))
    latents = rng.normal(size=(n, cfg.d_latent))
    audio_noise = rng.normal(size=(n, cfg.d_audio))
    text_noise = rng.normal(size=(n, k, cfg.d_text))

    sigmas = np.asarray(cfg.per_language_noise_sigma, dtype=np.float64)
    audio = latents @ audio_map.T + cfg.audio_noise_sigma * audio_noise
    shared_text = latents @ text_map.T
    text = (
        shared_text[:, None, :]
        + cfg.language_offset_scale * offsets[None, :, :]
        + sigmas[None, :, None] * text_noise
    )
    logger.info(f"Generated corpus N={n} K={k} d_audio={cfg.d_audio} d_text={cfg.d_text} seed={cfg.seed}")
    return Corpus(audio=audio, text=text, language_names=language_names(k))


def split_counts(n: int, fractions: Tuple[float, float, float]) -> Tuple[int, int, int]:
    """Floor every share, then hand leftovers to the largest remainders (ties in train/val/test order)."""
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r + 1e-9)) for r in raw]
    remainders = [r - c for r, c in zip(raw, counts)]
    for index in sorted(range(3), key=lambda j: (-remainders[j], j))[: n - sum(counts)]:
        counts[index] += 1
    return counts[0], counts[1], counts[2]


def split_corpus(corpus: Corpus, fractions: SplitFractions, seed: int) -> Corpus:
    counts = split_counts(corpus.n_instances, fractions.as_tuple())
    order = np.random.default_rng(seed).permutation(corpus.n_instances)
    tags = np.empty(corpus.n_instances, dtype=np.uint8)
    start = 0
    for code, count in enumerate(counts):
        tags[order[start:start + count]] = code
        start += count
    logger.info(f"Split corpus into train/val/test = {counts}")
    return corpus.with_split(tags)
