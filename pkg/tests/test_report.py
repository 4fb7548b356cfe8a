import pandas as pd
import pytest

from twins.exceptions import ErrorCode, TwinException
from twins.factory import generate_template, instantiate
from twins.fidelity.alignment import AlignmentConfig
from twins.fidelity.report import compare_batch, load_runs, report
from twins.harness.generator import GeneratorConfig
from twins.harness.runner import RunPlan, run, run_batch
from twins.services.emulator_service import EmulatorConfig


@pytest.fixture(scope="module")
def runs(schema):
    instance = instantiate(schema, generate_template(schema), "100")
    plan = RunPlan(hours=0.1, rate=30, custom=True)
    return {f"run-{seed}": run(plan, instance, GeneratorConfig(seed=seed), EmulatorConfig(seed=seed))
            for seed in (1, 2)}


def test_report_per_run(runs):
    result = report(runs)
    assert [r.name for r in result.runs] == ["run-1", "run-2"]
    for row in result.runs:
        assert 0 <= row.similarity_time_pct <= 100
        assert 0 <= row.similarity_status_pct <= 100
        assert row.requests == 180
        assert row.twin_200 + row.twin_503 == 180
        assert 0 <= row.p_fisher <= 1
    sims = [r.similarity_status_pct for r in result.runs]
    assert result.mean["similarity_status_pct"] == pytest.approx(sum(sims) / 2)
    assert result.std["similarity_status_pct"] == pytest.approx(abs(sims[0] - sims[1]) / 2)


def test_tolerance_widens_matches(runs):
    strict = report(runs, cfg=AlignmentConfig(tolerance_ms=0)).mean["similarity_time_pct"]
    loose = report(runs, cfg=AlignmentConfig(tolerance_ms=5_000)).mean["similarity_time_pct"]
    assert loose == 100.0
    assert strict < loose


def test_report_needs_runs():
    with pytest.raises(TwinException) as e:
        report({})
    assert e.value.error_code == ErrorCode.INVALID_PARAMETERS


def test_report_files(runs, tmp_path):
    for name, result in runs.items():
        result.save(tmp_path / "pairs" / name)
    loaded = load_runs(tmp_path / "pairs")
    assert sorted(loaded) == ["run-1", "run-2"]
    out = report(loaded).write(tmp_path / "out")
    frame = pd.read_csv(out / "report.csv")
    assert list(frame["name"]) == ["run-1", "run-2"]
    assert (out / "report.json").exists()


def test_load_runs_requires_runs(tmp_path):
    with pytest.raises(TwinException) as e:
        load_runs(tmp_path)
    assert e.value.error_code == ErrorCode.EMPTY_TRACE


def test_batch_rows(runs, instance):
    corpus = runs["run-1"].corpus[:40]
    batch = run_batch(corpus, instance, sizes=[2, 4], emulator_cfg=EmulatorConfig(seed=1),
                      base_seed=1, workers=2)
    rows = compare_batch(batch)
    assert [row.size for row in rows] == [2, 4]
    assert all(0 <= row.similarity_status_pct <= 100 for row in rows)
    assert all(row.std_time_pct >= 0 for row in rows)
    table = report(runs, [batch]).batches_frame()
    assert list(table["size"]) == [2, 4]
