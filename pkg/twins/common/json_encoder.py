"""Canonical JSON helpers: sorted keys, UTF-8, stable across runs."""
import datetime
from pathlib import Path
from typing import Any, Iterable, Iterator, Union

import orjson
from pydantic import BaseModel

_CANONICAL = orjson.OPT_SORT_KEYS | orjson.OPT_NON_STR_KEYS
_PRETTY = _CANONICAL | orjson.OPT_INDENT_2


def _default(obj):
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if isinstance(obj, datetime.timedelta):
        return obj.total_seconds()
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def dumps(obj: Any, pretty: bool = False) -> bytes:
    return orjson.dumps(obj, default=_default, option=_PRETTY if pretty else _CANONICAL)


def loads(data: Union[str, bytes]) -> Any:
    return orjson.loads(data)


def write_json(path: Union[str, Path], obj: Any, pretty: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(obj, pretty=pretty) + b"\n")
    return path


def read_json(path: Union[str, Path]) -> Any:
    return orjson.loads(Path(path).read_bytes())


def write_jsonl(path: Union[str, Path], rows: Iterable[Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        for row in rows:
            f.write(dumps(row))
            f.write(b"\n")
    return path


def iter_jsonl(path: Union[str, Path]) -> Iterator[Any]:
    with Path(path).open("rb") as f:
        for line in f:
            line = line.strip()
            if line:
                yield orjson.loads(line)
