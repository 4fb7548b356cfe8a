"""Long virtual runs; deselected by default, run with ``pytest -m slow``."""
import time

import pytest

from twins.factory import create_fleet, generate_template, serials_for_count
from twins.fidelity.report import compare_batch, report
from twins.harness.generator import GeneratorConfig
from twins.harness.runner import DEFAULT_FLEET_SIZES, RunPlan, run, run_batch
from twins.services.emulator_service import EmulatorConfig

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def hour_run(schema):
    instance = create_fleet(schema, generate_template(schema), ["100"])[0]
    return run(RunPlan(hours=1, rate=30), instance, GeneratorConfig(seed=7), EmulatorConfig(seed=7))


@pytest.fixture(scope="module")
def hour_row(hour_run):
    return report({"1h": hour_run}).runs[0]


def test_one_hour_run(hour_run):
    assert len(hour_run.corpus) == len(hour_run.twin_trace) == len(hour_run.device_trace) == 1_800
    assert hour_run.twin_trace.flagged_count() == 0


def test_one_hour_similarity(hour_row):
    assert hour_row.similarity_time_pct >= 90
    assert 88 <= hour_row.similarity_status_pct <= 96


def test_one_hour_channels_not_significantly_different(hour_row):
    assert hour_row.p_wilcoxon is not None and hour_row.p_wilcoxon > 0.05
    assert not hour_row.fisher_degenerate
    assert hour_row.p_fisher > 0.05


@pytest.mark.parametrize("seed", [1, 2])
def test_status_agreement_holds_across_seeds(schema, seed):
    instance = create_fleet(schema, generate_template(schema), ["100"])[0]
    result = run(RunPlan(hours=1, rate=30), instance, GeneratorConfig(seed=seed), EmulatorConfig(seed=seed))
    row = report({f"seed-{seed}": result}).runs[0]
    assert 88 <= row.similarity_status_pct <= 96
    assert row.p_fisher > 0.05


def test_ten_hour_count(schema):
    assert RunPlan(hours=10, rate=20).request_count == 12_000


def test_batch_sweep_matches_single_twin(schema, hour_run, hour_row):
    instance = create_fleet(schema, generate_template(schema), ["100"])[0]
    started = time.perf_counter()
    batch = run_batch(hour_run.corpus, instance, sizes=DEFAULT_FLEET_SIZES, emulator_cfg=EmulatorConfig(seed=7),
                      base_seed=7, device_trace=hour_run.device_trace)
    assert time.perf_counter() - started < 900

    fleet = batch.fleets[100]
    assert sorted(fleet, key=int) == serials_for_count(100)
    assert all(len(trace) == 1_800 for trace in fleet.values())

    rows = compare_batch(batch)
    assert [row.size for row in rows] == list(range(10, 101, 10))
    for row in rows:
        assert row.std_time_pct < 3 and row.std_status_pct < 3
        assert abs(row.similarity_time_pct - hour_row.similarity_time_pct) <= 2
        assert abs(row.similarity_status_pct - hour_row.similarity_status_pct) <= 2
