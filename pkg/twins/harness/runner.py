"""
Experiment runs.

A run forks every request of a seeded corpus to a twin and to the emulated
device and records both answers. A batch replays one corpus against fleets
of growing size, each twin on a worker thread, and compares every twin with
a single device trace.
"""
import logging
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from twins.behavior.delay import DelayProfile
from twins.behavior.runtime import TwinRuntime
from twins.common import json_encoder
from twins.common.config import SETTINGS
from twins.common.otel import span
from twins.exceptions import ErrorCode, TwinException
from twins.factory.instance import DeviceInstance
from twins.factory.instance_factory import serials_for_count
from twins.harness.endpoints import EmulatorEndpoint, Endpoint, TwinEndpoint
from twins.harness.generator import GeneratorConfig, RequestGenerator
from twins.harness.trace import Trace, load_corpus, save_corpus
from twins.protocol.records import RequestRecord, ResponseRecord
from twins.services.emulator_service import EmulatorConfig, ReferenceEmulator
from twins.services.mapping_service import ApiMapping, route_table

logger = logging.getLogger(__name__)

STANDARD_HOURS = (1, 2, 4, 6, 8, 10)
STANDARD_RATES = (20, 30)
DEFAULT_FLEET_SIZES = tuple(range(10, 101, 10))


class RunPlan(BaseModel):
    hours: float = 1
    rate: Optional[int] = Field(None, description="Requests per virtual minute; 30 up to 4 h, 20 beyond")
    fleet_sizes: Tuple[int, ...] = DEFAULT_FLEET_SIZES
    custom: bool = Field(False, description="Allow durations and rates outside the standard set")

    @model_validator(mode="after")
    def _standard(self):
        if self.rate is None:
            self.rate = 30 if self.hours <= 4 else 20
        if self.hours <= 0 or self.rate <= 0:
            raise ValueError("hours and rate must be positive")
        if any(size < 1 for size in self.fleet_sizes):
            raise ValueError("fleet sizes must be at least 1")
        if not self.custom:
            if self.hours not in STANDARD_HOURS:
                raise ValueError(f"hours must be one of {STANDARD_HOURS} (set custom to override)")
            if self.rate not in STANDARD_RATES:
                raise ValueError(f"rate must be one of {STANDARD_RATES} (set custom to override)")
        return self

    @property
    def request_count(self) -> int:
        return int(round(self.hours * 60 * self.rate))

    @property
    def gap_ms(self) -> float:
        return 60_000 / self.rate


def seed_for(base_seed: int, serial: str) -> int:
    """Independent, reproducible seed for one device of a fleet."""
    state = np.random.SeedSequence([base_seed, zlib.crc32(serial.encode())]).generate_state(1)
    return int(state[0])


def _send(endpoint: Endpoint, request: RequestRecord, tolerate_all: bool = False) -> ResponseRecord:
    try:
        return endpoint.send(request)
    except TwinException as e:
        if e.error_code != ErrorCode.ENDPOINT_UNREACHABLE and not tolerate_all:
            raise
        logger.warning(f"{endpoint.name}: request {request.id} recorded as unreachable: {e}")
        error = e.to_dict()
    except Exception as e:
        if not tolerate_all:
            raise
        logger.error(f"{endpoint.name}: request {request.id} failed: {e}", exc_info=True)
        error = TwinException(ErrorCode.ENDPOINT_UNREACHABLE, str(e)).to_dict()
    return ResponseRecord(request_id=request.id, status_code=503, response_time_ms=0.0,
                          body={"status": 503, "response_time_ms": 0.0, "error": error}, flagged=True)


def to_device_request(request: RequestRecord, mapping: ApiMapping) -> RequestRecord:
    return request.model_copy(update={"route": mapping.device_route_for(request.route)})


def fork_and_record(request: RequestRecord, twin_endpoint: Endpoint, device_endpoint: Endpoint,
                    mapping: ApiMapping, twin_trace: Optional[Trace] = None,
                    device_trace: Optional[Trace] = None) -> Tuple[ResponseRecord, ResponseRecord]:
    """Send the same payload to the twin and, on the linked vendor route, to the device."""
    twin_response = _send(twin_endpoint, request)
    device_response = _send(device_endpoint, to_device_request(request, mapping))
    if twin_trace is not None:
        twin_trace.record(twin_response)
    if device_trace is not None:
        device_trace.record(device_response)
    return twin_response, device_response


class RunResult(BaseModel):
    hours: float
    rate: int
    seed: int
    invalid_rate: float
    corpus: List[RequestRecord]
    twin_trace: Trace
    device_trace: Trace

    def save(self, out_dir: Union[str, Path]) -> Path:
        out_dir = Path(out_dir)
        save_corpus(out_dir / "corpus.jsonl", self.corpus)
        self.twin_trace.save(out_dir / "twin.jsonl")
        self.device_trace.save(out_dir / "device.jsonl")
        json_encoder.write_json(out_dir / "run.json", {
            "hours": self.hours,
            "rate": self.rate,
            "seed": self.seed,
            "invalid_rate": self.invalid_rate,
            "requests": len(self.corpus),
            "flagged": self.twin_trace.flagged_count() + self.device_trace.flagged_count(),
        })
        return out_dir

    @classmethod
    def load(cls, run_dir: Union[str, Path]) -> "RunResult":
        run_dir = Path(run_dir)
        meta = json_encoder.read_json(run_dir / "run.json")
        return cls(
            hours=meta["hours"],
            rate=meta["rate"],
            seed=meta["seed"],
            invalid_rate=meta["invalid_rate"],
            corpus=load_corpus(run_dir / "corpus.jsonl"),
            twin_trace=Trace.load(run_dir / "twin.jsonl", "twin"),
            device_trace=Trace.load(run_dir / "device.jsonl", "device"),
        )


def run(plan: RunPlan, instance: DeviceInstance, gen_cfg: Optional[GeneratorConfig] = None,
        emulator_cfg: Optional[EmulatorConfig] = None, twin_endpoint: Optional[Endpoint] = None,
        device_endpoint: Optional[Endpoint] = None, corpus: Optional[List[RequestRecord]] = None,
        delay_profile: Optional[DelayProfile] = None) -> RunResult:
    """
    Generate ``plan.request_count`` requests spaced ``60/rate`` virtual
    seconds apart and fork each to both endpoints. Without explicit
    endpoints a fresh in-process twin and emulator are built from
    ``instance``; ``delay_profile`` sets the twin's response delays.
    """
    gen_cfg = gen_cfg or GeneratorConfig()
    mapping = route_table(instance.schema)
    if corpus is None:
        generator = RequestGenerator(instance.schema, mapping.for_serial(instance.serial), gen_cfg)
        corpus = generator.corpus(plan.request_count, plan.gap_ms)
    twin_endpoint = twin_endpoint or TwinEndpoint(
        TwinRuntime(instance.clone(), delay_profile=delay_profile, seed=seed_for(gen_cfg.seed, instance.serial)),
        mapping)
    device_endpoint = device_endpoint or EmulatorEndpoint(
        ReferenceEmulator(emulator_cfg or EmulatorConfig(), instance, mapping=mapping))

    twin_trace = Trace(endpoint=twin_endpoint.name)
    device_trace = Trace(endpoint=device_endpoint.name)
    started = time.perf_counter()
    step = max(1, len(corpus) // 10)
    with span("harness.run", hours=plan.hours, rate=plan.rate, requests=len(corpus)):
        for i, request in enumerate(corpus, start=1):
            fork_and_record(request, twin_endpoint, device_endpoint, mapping, twin_trace, device_trace)
            if i % step == 0:
                logger.info(f"Run progress: {i}/{len(corpus)} requests")
    logger.info(f"Run of {len(corpus)} paired requests finished in {time.perf_counter() - started:.1f}s "
                f"(twin 200/503: {twin_trace.count(200)}/{twin_trace.count(503)}, "
                f"device 200/503: {device_trace.count(200)}/{device_trace.count(503)})")
    return RunResult(hours=plan.hours, rate=plan.rate, seed=gen_cfg.seed, invalid_rate=gen_cfg.invalid_rate,
                     corpus=corpus, twin_trace=twin_trace, device_trace=device_trace)


def replay(endpoint: Endpoint, corpus: Iterable[RequestRecord]) -> Trace:
    """Send a corpus to one endpoint in order; failures become flagged 503 entries."""
    trace = Trace(endpoint=endpoint.name)
    for request in corpus:
        trace.record(_send(endpoint, request, tolerate_all=True))
    return trace


def _replay_twin(instance: DeviceInstance, corpus: List[RequestRecord], mapping: ApiMapping,
                 base_seed: int, delay_profile: Optional[DelayProfile] = None) -> Trace:
    runtime = TwinRuntime(instance, delay_profile=delay_profile, seed=seed_for(base_seed, instance.serial))
    endpoint = TwinEndpoint(runtime, mapping, name=f"twin-{instance.serial}")
    return replay(endpoint, (request.retarget(instance.serial) for request in corpus))


class BatchResult(BaseModel):
    device_trace: Trace
    fleets: Dict[int, Dict[str, Trace]] = Field(default_factory=dict)

    def save(self, out_dir: Union[str, Path]) -> Path:
        out_dir = Path(out_dir)
        self.device_trace.save(out_dir / "device.jsonl")
        for size, traces in self.fleets.items():
            for serial, trace in traces.items():
                trace.save(out_dir / f"size-{size}" / f"twin-{serial}.jsonl")
        json_encoder.write_json(out_dir / "batch.json", {"sizes": sorted(self.fleets)})
        return out_dir

    @classmethod
    def load(cls, batch_dir: Union[str, Path]) -> "BatchResult":
        batch_dir = Path(batch_dir)
        meta = json_encoder.read_json(batch_dir / "batch.json")
        fleets = {}
        for size in meta["sizes"]:
            files = sorted((batch_dir / f"size-{size}").glob("twin-*.jsonl"))
            fleets[size] = {f.stem[len("twin-"):]: Trace.load(f) for f in files}
        return cls(device_trace=Trace.load(batch_dir / "device.jsonl", "device"), fleets=fleets)


def run_batch(corpus: List[RequestRecord], instance: DeviceInstance, sizes: Iterable[int] = DEFAULT_FLEET_SIZES,
              emulator_cfg: Optional[EmulatorConfig] = None, base_seed: Optional[int] = None,
              workers: Optional[int] = None, device_trace: Optional[Trace] = None,
              delay_profile: Optional[DelayProfile] = None) -> BatchResult:
    """
    Replay ``corpus`` against fleets of each size, all twins of a fleet
    concurrently, and once against the emulated device.
    """
    if not corpus:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Batch replay needs a non-empty corpus")
    base_seed = SETTINGS.SEED if base_seed is None else base_seed
    workers = workers or SETTINGS.HARNESS_WORKERS
    mapping = route_table(instance.schema)

    if device_trace is None:
        emulator = ReferenceEmulator(emulator_cfg or EmulatorConfig(), instance, mapping=mapping)
        device_corpus = (to_device_request(r.retarget(emulator.serial), mapping) for r in corpus)
        device_trace = replay(EmulatorEndpoint(emulator), device_corpus)

    result = BatchResult(device_trace=device_trace)
    for size in sizes:
        started = time.perf_counter()
        fleet = [instance.clone(serial) for serial in serials_for_count(size)]
        with span("harness.batch", size=size), ThreadPoolExecutor(max_workers=min(workers, size)) as pool:
            futures = {twin.serial: pool.submit(_replay_twin, twin, corpus, mapping, base_seed, delay_profile)
                       for twin in fleet}
            result.fleets[size] = {serial: future.result() for serial, future in futures.items()}
        logger.info(f"Batch of {size} twin(s) replayed {len(corpus)} requests each "
                    f"in {time.perf_counter() - started:.1f}s")
    return result
