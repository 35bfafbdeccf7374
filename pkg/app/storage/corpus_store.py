"""
Corpus persistence.

Binary layout (little-endian):
    "ALNC" | version u32 | N u32 | K u32 | d_audio u32 | d_text u32
    audio f64[N * d_audio] | text f64[N * K * d_text] (instance-major) | split u8[N]
    K x (name length u32 | UTF-8 name bytes)
"""
import logging
import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import CorpusFormatError, StorageError, TruncatedFileError, VersionMismatchError
from ..services.datagen import SPLIT_CODES, Corpus

logger = logging.getLogger(__name__)

MAGIC = b"ALNC"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_NAME_LENGTH = struct.Struct("<I")

PathLike = Union[str, Path]


def corpus_to_bytes(corpus: Corpus) -> bytes:
    parts = [
        _HEADER.pack(MAGIC, VERSION, corpus.n_instances, corpus.n_languages, corpus.d_audio, corpus.d_text),
        corpus.audio.astype("<f8").tobytes(),
        corpus.text.astype("<f8").tobytes(),
        corpus.split.astype("u1").tobytes(),
    ]
    for name in corpus.language_names:
        encoded = name.encode("utf-8")
        parts.append(_NAME_LENGTH.pack(len(encoded)))
        parts.append(encoded)
    return b"".join(parts)


def corpus_from_bytes(data: bytes, source: str = "<bytes>") -> Corpus:
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{source}: {len(data)} bytes is shorter than the corpus header")
    magic, version, n, k, d_audio, d_text = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorpusFormatError(f"{source}: not a corpus file (magic {magic!r})")
    if version != VERSION:
        raise VersionMismatchError(f"{source}: corpus format version {version}, expected {VERSION}")

    offset = _HEADER.size
    sizes = (n * d_audio * 8, n * k * d_text * 8, n)
    if len(data) < offset + sum(sizes):
        raise TruncatedFileError(f"{source}: payload ends after {len(data)} bytes, needs {offset + sum(sizes)}")
    audio = np.frombuffer(data, dtype="<f8", count=n * d_audio, offset=offset).reshape(n, d_audio)
    offset += sizes[0]
    text = np.frombuffer(data, dtype="<f8", count=n * k * d_text, offset=offset).reshape(n, k, d_text)
    offset += sizes[1]
    split = np.frombuffer(data, dtype="u1", count=n, offset=offset)
    offset += sizes[2]

    names = []
    for _ in range(k):
        if len(data) < offset + _NAME_LENGTH.size:
            raise TruncatedFileError(f"{source}: language name table is cut short")
        (length,) = _NAME_LENGTH.unpack_from(data, offset)
        offset += _NAME_LENGTH.size
        if len(data) < offset + length:
            raise TruncatedFileError(f"{source}: language name table is cut short")
        try:
            names.append(data[offset:offset + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorpusFormatError(f"{source}: language name is not valid UTF-8") from exc
        offset += length
    if offset != len(data):
        raise CorpusFormatError(f"{source}: {len(data) - offset} unexpected trailing bytes")
    if np.any(split > max(SPLIT_CODES.values())):
        raise CorpusFormatError(f"{source}: unknown split tag")
    return Corpus(audio=audio.astype(np.float64), text=text.astype(np.float64), language_names=tuple(names), split=split)


def save_corpus(corpus: Corpus, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(corpus_to_bytes(corpus))
    except OSError as exc:
        raise StorageError(f"Cannot write corpus to {path}: {exc}") from exc
    logger.info(f"Saved corpus N={corpus.n_instances} K={corpus.n_languages} to {path}")
    return path


def load_corpus(path: PathLike) -> Corpus:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"Cannot read corpus {path}: {exc}") from exc
    corpus = corpus_from_bytes(data, str(path))
    logger.info(f"Loaded corpus N={corpus.n_instances} K={corpus.n_languages} from {path}")
    return corpus


def load_corpus_csv(
    audio_csv: PathLike,
    text_csv: PathLike,
    language_names: Optional[Sequence[str]] = None,
) -> Corpus:
    """
    Build a corpus from externally computed features.

    audio_csv: one row per instance with an `instance` column, an optional `split`
    column (train/val/test) and the feature columns. text_csv: one row per
    (instance, language) with `instance` and `language` columns and the feature
    columns. Languages keep their order of first appearance unless language_names
    is given; the first language is treated as English.
    """
    try:
        audio_df = pd.read_csv(audio_csv)
        text_df = pd.read_csv(text_csv)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise StorageError(f"Cannot read feature CSV: {exc}") from exc
    for frame, required, label in ((audio_df, ["instance"], "audio"), (text_df, ["instance", "language"], "text")):
        missing = [column for column in required if column not in frame.columns]
        if missing:
            raise CorpusFormatError(f"{label} CSV is missing columns {missing}")

    audio_df = audio_df.sort_values("instance", kind="stable").reset_index(drop=True)
    instances = audio_df["instance"].tolist()
    if len(set(instances)) != len(instances):
        raise CorpusFormatError("audio CSV lists an instance more than once")
    audio_features = [c for c in audio_df.columns if c not in ("instance", "split")]
    text_features = [c for c in text_df.columns if c not in ("instance", "language")]

    text_df = text_df.assign(language=text_df["language"].astype(str))
    names = list(language_names) if language_names is not None else list(dict.fromkeys(text_df["language"]))
    if text_df.duplicated(["instance", "language"]).any():
        raise CorpusFormatError("text CSV lists an (instance, language) pair more than once")
    if len(text_df) != len(instances) * len(names) or not set(text_df["language"]) <= set(names):
        raise CorpusFormatError(f"text CSV must hold exactly one row per instance and language ({len(names)} languages)")

    indexed = text_df.set_index(["instance", "language"])
    try:
        stacked = indexed.loc[pd.MultiIndex.from_product([instances, names]), text_features].to_numpy(dtype=np.float64)
    except KeyError as exc:
        raise CorpusFormatError(f"text CSV has no row for {exc}") from exc
    text = stacked.reshape(len(instances), len(names), len(text_features))

    split = None
    if "split" in audio_df.columns:
        unknown = set(audio_df["split"]) - set(SPLIT_CODES)
        if unknown:
            raise CorpusFormatError(f"unknown split names {sorted(map(str, unknown))}")
        split = audio_df["split"].map(SPLIT_CODES).to_numpy(dtype=np.uint8)
    corpus = Corpus(
        audio=audio_df[audio_features].to_numpy(dtype=np.float64), text=text, language_names=tuple(names), split=split
    )
    logger.info(f"Imported corpus N={corpus.n_instances} K={corpus.n_languages} from CSV")
    return corpus
