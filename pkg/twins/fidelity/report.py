import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from twins.common import json_encoder
from twins.exceptions import ErrorCode, TwinException
from twins.fidelity.alignment import AlignmentConfig, align_similarity
from twins.fidelity.stats import fisher_test, signed_rank_test
from twins.harness.runner import BatchResult, RunResult
from twins.harness.trace import Trace

logger = logging.getLogger(__name__)

METRICS = ("similarity_time_pct", "similarity_status_pct", "p_wilcoxon", "p_fisher")


class RunSimilarity(BaseModel):
    name: str
    hours: float
    rate: int
    requests: int
    similarity_time_pct: float
    similarity_status_pct: float
    p_wilcoxon: Optional[float] = Field(None, description="None when too few non-zero pairs")
    p_fisher: float
    fisher_degenerate: bool = False
    twin_200: int
    twin_503: int
    device_200: int
    device_503: int
    flagged: int = 0


class BatchSimilarity(BaseModel):
    size: int
    similarity_time_pct: float
    similarity_status_pct: float
    std_time_pct: float
    std_status_pct: float


class SimilarityReport(BaseModel):
    runs: List[RunSimilarity] = Field(default_factory=list)
    mean: Dict[str, Optional[float]] = Field(default_factory=dict)
    std: Dict[str, Optional[float]] = Field(default_factory=dict)
    batches: List[BatchSimilarity] = Field(default_factory=list)

    def runs_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.runs])

    def batches_frame(self) -> pd.DataFrame:
        return pd.DataFrame([b.model_dump() for b in self.batches], columns=list(BatchSimilarity.model_fields))

    def write(self, out_dir: Union[str, Path]) -> Path:
        """report.json plus CSV mirrors of the run and batch tables."""
        out_dir = Path(out_dir)
        json_encoder.write_json(out_dir / "report.json", self.model_dump())
        self.runs_frame().to_csv(out_dir / "report.csv", index=False)
        if self.batches:
            self.batches_frame().to_csv(out_dir / "batches.csv", index=False)
        return out_dir


def _paired_times(twin: Trace, device: Trace):
    device_times = {e.request_id: e.response_time_ms for e in device.entries}
    pairs = [(e.response_time_ms, device_times[e.request_id]) for e in twin.entries if e.request_id in device_times]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def compare_traces(twin: Trace, device: Trace, cfg: Optional[AlignmentConfig] = None):
    """Similarity of both channels of one twin trace against a device trace."""
    cfg = cfg or AlignmentConfig()
    time_pct = align_similarity(twin.response_times().tolist(), device.response_times().tolist(), cfg)
    status_pct = align_similarity(twin.status_codes(), device.status_codes(), cfg, categorical=True)
    return time_pct, status_pct


def compare_run(name: str, result: RunResult, cfg: Optional[AlignmentConfig] = None) -> RunSimilarity:
    twin, device = result.twin_trace, result.device_trace
    time_pct, status_pct = compare_traces(twin, device, cfg)
    try:
        p_wilcoxon = signed_rank_test(*_paired_times(twin, device)).p_value
    except TwinException as e:
        if e.error_code != ErrorCode.TOO_FEW_PAIRS:
            raise
        logger.warning(f"{name}: {e.message}")
        p_wilcoxon = None
    fisher = fisher_test([[twin.count(200), twin.count(503)], [device.count(200), device.count(503)]])
    return RunSimilarity(
        name=name,
        hours=result.hours,
        rate=result.rate,
        requests=len(result.corpus),
        similarity_time_pct=time_pct,
        similarity_status_pct=status_pct,
        p_wilcoxon=p_wilcoxon,
        p_fisher=fisher.p_value,
        fisher_degenerate=fisher.degenerate,
        twin_200=twin.count(200),
        twin_503=twin.count(503),
        device_200=device.count(200),
        device_503=device.count(503),
        flagged=twin.flagged_count() + device.flagged_count(),
    )


def compare_batch(batch: BatchResult, cfg: Optional[AlignmentConfig] = None) -> List[BatchSimilarity]:
    rows = []
    for size in sorted(batch.fleets):
        scores = np.array([compare_traces(trace, batch.device_trace, cfg) for trace in batch.fleets[size].values()])
        rows.append(BatchSimilarity(
            size=size,
            similarity_time_pct=float(scores[:, 0].mean()),
            similarity_status_pct=float(scores[:, 1].mean()),
            std_time_pct=float(scores[:, 0].std()),
            std_status_pct=float(scores[:, 1].std()),
        ))
    return rows


def _clean(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


def report(runs: Dict[str, RunResult], batches: Sequence[BatchResult] = (),
           cfg: Optional[AlignmentConfig] = None) -> SimilarityReport:
    """Per-run similarities and p-values, their mean and (population) std, and one row per fleet size."""
    if not runs:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "A report needs at least one run")
    rows = [compare_run(name, result, cfg) for name, result in runs.items()]
    frame = pd.DataFrame([r.model_dump() for r in rows])[list(METRICS)].astype(float)
    batch_rows = [row for batch in batches for row in compare_batch(batch, cfg)]
    for row in rows:
        logger.info(f"{row.name}: time {row.similarity_time_pct:.2f}%, status {row.similarity_status_pct:.2f}%, "
                    f"p_wilcoxon={row.p_wilcoxon}, p_fisher={row.p_fisher:.4f}")
    return SimilarityReport(
        runs=rows,
        mean={k: _clean(v) for k, v in frame.mean().items()},
        std={k: _clean(v) for k, v in frame.std(ddof=0).items()},
        batches=batch_rows,
    )


def load_runs(pairs_dir: Union[str, Path]) -> Dict[str, RunResult]:
    """A run directory (holding run.json) or a directory of run directories."""
    pairs_dir = Path(pairs_dir)
    if (pairs_dir / "run.json").exists():
        return {pairs_dir.name: RunResult.load(pairs_dir)}
    runs = {d.name: RunResult.load(d) for d in sorted(pairs_dir.iterdir()) if (d / "run.json").exists()}
    if not runs:
        raise TwinException(ErrorCode.EMPTY_TRACE, f"No runs found under {pairs_dir}")
    return runs
