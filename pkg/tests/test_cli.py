import orjson
import pytest
from click.testing import CliRunner

from twins.cli import _parse_sizes, cli

QUIET = ["--log-level", "WARNING"]


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


def test_schema_export(runner):
    result = runner.invoke(cli, QUIET + ["schema"])
    assert result.exit_code == 0, result.stderr
    document = orjson.loads(result.stdout)
    assert document["root_class"] == "Device"


def test_template_writes_sidecar(runner, tmp_path):
    out = tmp_path / "template.json"
    result = runner.invoke(cli, QUIET + ["template", "--out", str(out)])
    assert result.exit_code == 0, result.stderr
    assert "device" in orjson.loads(out.read_bytes())
    assert "device.settings.display.brightness" in orjson.loads((tmp_path / "template.doc.json").read_bytes())


def test_fleet(runner, tmp_path):
    result = runner.invoke(cli, QUIET + ["fleet", "--count", "3", "--out", str(tmp_path / "fleet")])
    assert result.exit_code == 0, result.stderr
    assert sorted(p.name for p in (tmp_path / "fleet").iterdir()) == ["1.json", "2.json", "3.json"]
    assert orjson.loads((tmp_path / "fleet" / "2.json").read_bytes())["serial"] == "2"


def test_invalid_template_exits_1(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"device": {"settings": {"early_access_to_medication": 301}}}')
    result = runner.invoke(cli, QUIET + ["fleet", "--input", str(bad), "--out", str(tmp_path / "fleet")])
    assert result.exit_code == 1
    error = orjson.loads(result.stderr)
    assert error["error"] == "CONSTRAINT_VIOLATION"
    assert error["violations"][0]["constraint_id"] == "C3"


def test_nonstandard_run_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, QUIET + ["run", "--hours", "3", "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert orjson.loads(result.stderr)["error"] == "USAGE"


def test_missing_option_is_usage_error(runner):
    result = runner.invoke(cli, QUIET + ["fleet"])
    assert result.exit_code == 2
    assert "--out" in orjson.loads(result.stderr)["message"]


def test_run_batch_and_fidelity(runner, tmp_path):
    pairs = tmp_path / "pairs"
    result = runner.invoke(cli, QUIET + ["run", "--hours", "0.05", "--rate", "20", "--custom", "--seed", "3",
                                         "--out", str(pairs)])
    assert result.exit_code == 0, result.stderr
    assert {p.name for p in pairs.iterdir()} == {"corpus.jsonl", "twin.jsonl", "device.jsonl", "run.json"}
    assert len((pairs / "corpus.jsonl").read_text().splitlines()) == 60

    batch = tmp_path / "batch"
    result = runner.invoke(cli, QUIET + ["batch", "--corpus", str(pairs / "corpus.jsonl"), "--sizes", "2,3",
                                         "--workers", "2", "--out", str(batch)])
    assert result.exit_code == 0, result.stderr
    assert (batch / "size-3" / "twin-3.jsonl").exists()

    result = runner.invoke(cli, QUIET + ["fidelity", "--pairs", str(pairs), "--batch", str(batch)])
    assert result.exit_code == 0, result.stderr
    report = orjson.loads((pairs / "report.json").read_bytes())
    assert report["runs"][0]["requests"] == 60
    assert [row["size"] for row in report["batches"]] == [2, 3]


def test_run_takes_delays_from_execution_log(runner, tmp_path):
    log = tmp_path / "device.log"
    log.write_text('{"operation": "settings-update", "start_ms": 0, "end_ms": 2500}\n')
    pairs = tmp_path / "pairs"
    result = runner.invoke(cli, QUIET + ["run", "--hours", "0.05", "--rate", "20", "--custom", "--seed", "3",
                                         "--execution-log", str(log), "--out", str(pairs)])
    assert result.exit_code == 0, result.stderr
    twin = [orjson.loads(line) for line in (pairs / "twin.jsonl").read_text().splitlines()]
    assert len(twin) == 60
    assert {entry["response_time_ms"] for entry in twin} == {2500}


def test_missing_execution_log_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, QUIET + ["run", "--execution-log", str(tmp_path / "none.log"), "--out", str(tmp_path)])
    assert result.exit_code == 2


@pytest.mark.parametrize("value, sizes", [
    ("10..100", list(range(10, 101, 10))),
    ("10..30:5", [10, 15, 20, 25, 30]),
    ("4,8", [4, 8]),
])
def test_parse_sizes(value, sizes):
    assert _parse_sizes(value) == sizes
