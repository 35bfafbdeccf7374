"""Config documents in, JSON / CSV / JSON-lines reports and run manifests out."""
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from ..errors import ConfigError, StorageError
from ..models import BoundEpochRecord, BoundTrace, RunManifest

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)
PathLike = Union[str, Path]


# --- Config documents ---

def format_validation_error(exc: ValidationError) -> str:
    problems = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        problems.append(f"{location}: {error['msg']}")
    return "; ".join(problems)


def parse_config(text: str, model: Type[ModelT], source: str = "<config>") -> ModelT:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {format_validation_error(exc)}") from exc


def load_config(path: PathLike, model: Type[ModelT]) -> ModelT:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    config = parse_config(text, model, str(path))
    logger.info(f"Loaded {model.__name__} from {path}")
    return config


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: BaseModel) -> str:
    return hashlib.sha256(canonical_json(config.model_dump(mode="json")).encode("utf-8")).hexdigest()


# --- Writers ---

def _prepare(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"Cannot create directory for {path}: {exc}") from exc
    return path


def write_json(model: BaseModel, path: PathLike) -> Path:
    path = _prepare(path)
    try:
        path.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path


def write_rows_csv(rows: Iterable[Dict[str, Any]], path: PathLike, columns: List[str]) -> Path:
    path = _prepare(path)
    try:
        pd.DataFrame(list(rows), columns=columns).to_csv(path, index=False)
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path


# --- Bound traces ---

_TRACE_KEYS = ("seed", "n_instances", "n_languages")


def write_trace_jsonl(trace: BoundTrace, path: PathLike) -> Path:
    """One JSON object per epoch; each line carries the trace's seed and corpus shape."""
    path = _prepare(path)
    header = {key: getattr(trace, key) for key in _TRACE_KEYS}
    lines = [json.dumps({**header, **record.model_dump(mode="json")}, sort_keys=True) for record in trace.records]
    try:
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}") from exc
    return path


def read_trace_jsonl(path: PathLike) -> BoundTrace:
    path = Path(path)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as exc:
        raise StorageError(f"Cannot read trace {path}: {exc}") from exc
    if not lines:
        raise StorageError(f"Trace {path} holds no epochs")
    header = None
    records = []
    for number, line in enumerate(lines, start=1):
        try:
            row = json.loads(line)
            line_header = {key: row.pop(key) for key in _TRACE_KEYS}
            records.append(BoundEpochRecord.model_validate(row))
        except (json.JSONDecodeError, KeyError, ValidationError) as exc:
            raise StorageError(f"{path}: malformed trace line {number}: {exc}") from exc
        if header is None:
            header = line_header
        elif line_header != header:
            raise StorageError(f"{path}: line {number} belongs to a different trace")
    return BoundTrace(records=records, **header)


# --- Manifests ---

def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(manifest: RunManifest, out_dir: PathLike) -> Path:
    missing = [output for output in manifest.outputs if not Path(output).exists()]
    if missing:
        raise StorageError(f"Manifest lists outputs that were not written: {missing}")
    path = write_json(manifest, Path(out_dir) / f"{manifest.command}.manifest.json")
    logger.info(f"Wrote manifest {path}")
    return path
