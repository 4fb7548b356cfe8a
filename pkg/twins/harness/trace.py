import threading
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr

from twins.common import json_encoder
from twins.exceptions import ErrorCode, TwinException
from twins.protocol.records import RequestRecord, ResponseRecord


class TraceEntry(BaseModel):
    request_id: int
    response_time_ms: float
    status_code: int
    flagged: bool = False


class Trace(BaseModel):
    """Responses of one endpoint, ordered by request id."""
    endpoint: str
    entries: List[TraceEntry] = Field(default_factory=list)

    _lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)

    def record(self, response: ResponseRecord) -> TraceEntry:
        entry = TraceEntry(
            request_id=response.request_id,
            response_time_ms=response.response_time_ms,
            status_code=response.status_code,
            flagged=response.flagged,
        )
        with self._lock:
            self.entries.append(entry)
            if len(self.entries) > 1 and self.entries[-2].request_id > entry.request_id:
                self.entries.sort(key=lambda e: e.request_id)
        return entry

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> List[int]:
        return [e.request_id for e in self.entries]

    def response_times(self) -> np.ndarray:
        return np.array([e.response_time_ms for e in self.entries], dtype=float)

    def status_codes(self) -> List[int]:
        return [e.status_code for e in self.entries]

    def flagged_count(self) -> int:
        return sum(e.flagged for e in self.entries)

    def count(self, status_code: int) -> int:
        return sum(e.status_code == status_code for e in self.entries)

    def save(self, path: Union[str, Path]) -> Path:
        return json_encoder.write_jsonl(path, (e.model_dump() for e in self.entries))

    @classmethod
    def load(cls, path: Union[str, Path], endpoint: str = None) -> "Trace":
        path = Path(path)
        if not path.exists():
            raise TwinException(ErrorCode.EMPTY_TRACE, f"No trace at {path}")
        entries = [TraceEntry.model_validate(row) for row in json_encoder.iter_jsonl(path)]
        return cls(endpoint=endpoint or path.stem, entries=sorted(entries, key=lambda e: e.request_id))


def save_corpus(path: Union[str, Path], corpus: List[RequestRecord]) -> Path:
    return json_encoder.write_jsonl(path, (r.model_dump(mode="json") for r in corpus))


def load_corpus(path: Union[str, Path]) -> List[RequestRecord]:
    path = Path(path)
    if not path.exists():
        raise TwinException(ErrorCode.INVALID_PARAMETERS, f"No corpus at {path}")
    return [RequestRecord.model_validate(row) for row in json_encoder.iter_jsonl(path)]
