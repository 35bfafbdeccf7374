import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from ..errors import CheckpointFormatError, StorageError, TruncatedFileError, VersionMismatchError
from ..models import EncoderArch
from ..services.encoders import EncoderParams, unflatten

logger = logging.getLogger(__name__)

MAGIC = b"ALNP"
VERSION = 1
# magic | version | d_audio | d_text | d_embed | hidden | parameter count, then f64 values
_HEADER = struct.Struct("<4sIIIIIQ")


def params_to_bytes(params: EncoderParams) -> bytes:
    arch = params.arch
    w = params.flatten()
    header = _HEADER.pack(MAGIC, VERSION, arch.d_audio, arch.d_text, arch.d_embed, arch.hidden, w.size)
    return header + w.astype("<f8").tobytes()


def params_from_bytes(data: bytes, source: str = "<bytes>") -> EncoderParams:
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{source}: {len(data)} bytes is shorter than the checkpoint header")
    magic, version, d_audio, d_text, d_embed, hidden, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{source}: not a parameter checkpoint (magic {magic!r})")
    if version != VERSION:
        raise VersionMismatchError(f"{source}: checkpoint format version {version}, expected {VERSION}")
    try:
        arch = EncoderArch(d_audio=d_audio, d_text=d_text, d_embed=d_embed, hidden=hidden)
    except ValidationError as exc:
        raise CheckpointFormatError(f"{source}: invalid architecture in header") from exc
    if count != arch.param_count:
        raise CheckpointFormatError(f"{source}: header declares {count} parameters, architecture has {arch.param_count}")
    expected = _HEADER.size + 8 * count
    if len(data) < expected:
        raise TruncatedFileError(f"{source}: payload ends after {len(data)} bytes, needs {expected}")
    if len(data) > expected:
        raise CheckpointFormatError(f"{source}: {len(data) - expected} unexpected trailing bytes")
    w = np.frombuffer(data, dtype="<f8", count=count, offset=_HEADER.size).astype(np.float64)
    return unflatten(arch, w)


def save_params(params: EncoderParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(params_to_bytes(params))
    except OSError as exc:
        raise StorageError(f"Cannot write checkpoint to {path}: {exc}") from exc
    logger.info(f"Saved {params.arch.param_count} parameters to {path}")
    return path


def load_params(path: Union[str, Path]) -> EncoderParams:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"Cannot read checkpoint {path}: {exc}") from exc
    return params_from_bytes(data, str(path))
