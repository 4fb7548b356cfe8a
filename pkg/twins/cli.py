"""``dtw``: command-line entry point wiring schema, factory, servers, harness and fidelity."""
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click

from twins.behavior.delay import DelayProfile, synchronize_from_logs
from twins.behavior.runtime import TwinRuntime
from twins.common import json_encoder
from twins.common.config import SETTINGS, ServerConfig
from twins.common.log import Log
from twins.common.otel import Otel
from twins.exceptions import ErrorCode, TwinException
from twins.factory import create_fleet, generate_template, generate_template_doc, serials_for_count
from twins.factory.instance import DeviceInstance
from twins.api.app import serve as start_server
from twins.fidelity.alignment import AlignmentConfig
from twins.fidelity.report import load_runs, report
from twins.harness.endpoints import HttpEndpoint
from twins.harness.generator import GeneratorConfig
from twins.harness.runner import BatchResult, RunPlan, run as run_experiment, run_batch
from twins.harness.trace import load_corpus
from twins.model import builtin_dispenser_schema
from twins.services.emulator_service import EmulatorConfig, ReferenceEmulator

logger = logging.getLogger(__name__)

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _fail(payload: dict, code: int):
    click.echo(json_encoder.dumps(payload).decode(), err=True)
    sys.exit(code)


class TwinsGroup(click.Group):
    """Turns every failure into an error JSON on stderr: usage errors exit 2, runtime errors exit 1."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            _fail({"error": "USAGE", "code": USAGE_EXIT, "message": e.format_message()}, USAGE_EXIT)
        except TwinException as e:
            logger.debug(f"Command failed: {e}")
            _fail(e.to_dict(), RUNTIME_EXIT)
        except (click.exceptions.Exit, click.Abort, SystemExit):
            raise
        except Exception as e:
            logger.error(f"Unexpected error: {e}", exc_info=True)
            _fail(TwinException(ErrorCode.INTERNAL_ERROR, str(e)).to_dict(), RUNTIME_EXIT)


def _parse_sizes(value: str) -> List[int]:
    """``10..100`` (steps of 10), ``10..50:5`` or ``10,20,40``."""
    try:
        if ".." in value:
            span, _, step = value.partition(":")
            start, end = (int(x) for x in span.split(".."))
            return list(range(start, end + 1, int(step) if step else 10))
        return [int(x) for x in value.split(",") if x]
    except ValueError:
        raise click.BadParameter(f"cannot parse fleet sizes {value!r}")


def _load_fleet(input_path: Optional[str], count: int, serials: Optional[str]) -> List[DeviceInstance]:
    schema = builtin_dispenser_schema()
    filled = Path(input_path).read_bytes() if input_path else generate_template(schema)
    serial_list = [s.strip() for s in serials.split(",") if s.strip()] if serials else serials_for_count(count)
    return create_fleet(schema, filled, serial_list)


def _delay_profile(execution_log: Optional[str]) -> Optional[DelayProfile]:
    return synchronize_from_logs(execution_log) if execution_log else None


input_option = click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False),
                            help="Filled input template (defaults to the unfilled template's defaults)")
count_option = click.option("--count", type=click.IntRange(min=1), default=1, show_default=True,
                            help="Number of devices; serials 1..N")
serials_option = click.option("--serials", help="Comma-separated serial numbers (overrides --count)")
execution_log_option = click.option("--execution-log", type=click.Path(exists=True, dir_okay=False),
                                    help="Device execution log (JSONL) the twins take their delays from")


@click.group(cls=TwinsGroup, context_settings={"auto_envvar_prefix": "DTW"})
@click.option("--log-level", default=None, help="Overrides DTW_LOG_LEVEL")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Server config JSON: {bind, acceleration, vendor_route_prefix, device_upstream}")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], config_path: Optional[str]):
    """Digital twins of medicine dispensers."""
    Log.init(log_level)
    Otel.init()
    ctx.obj = {"config_path": config_path}


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), help="Write to a file instead of stdout")
def schema(out: Optional[str]):
    """Export the built-in device schema as JSON."""
    document = builtin_dispenser_schema().to_document()
    if out:
        json_encoder.write_json(out, document)
    else:
        click.echo(json_encoder.dumps(document, pretty=True).decode())


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def template(out: str):
    """Write the JSON input template and its .doc.json sidecar."""
    schema_ = builtin_dispenser_schema()
    path = json_encoder.write_json(out, generate_template(schema_))
    doc_path = path.with_name(f"{path.stem}.doc.json")
    json_encoder.write_json(doc_path, generate_template_doc(schema_))
    click.echo(str(path))


@cli.command()
@input_option
@count_option
@serials_option
@click.option("--out", type=click.Path(file_okay=False), required=True)
def fleet(input_path: Optional[str], count: int, serials: Optional[str], out: str):
    """Create one instance file per serial from a filled template."""
    instances = _load_fleet(input_path, count, serials)
    out_dir = Path(out)
    for instance in instances:
        json_encoder.write_json(out_dir / f"{instance.serial}.json", instance.to_dict())
    click.echo(f"{len(instances)} instance(s) written to {out_dir}")


def _server_config(ctx: click.Context, bind: Optional[str], acceleration: Optional[float],
                   upstream: Optional[str] = None) -> ServerConfig:
    return ServerConfig.load(ctx.obj.get("config_path"), bind=bind, acceleration=acceleration,
                             device_upstream=upstream)


def _serve_blocking(handle) -> None:
    click.echo(handle.url)
    try:
        handle.wait()
    except KeyboardInterrupt:
        logger.info("Stopping server")
    finally:
        handle.stop()
        handle.registry.shutdown()


@cli.command()
@input_option
@count_option
@serials_option
@click.option("--bind", help="host:port (default from config / DTW_HOST, DTW_PORT)")
@click.option("--acceleration", type=float, help="Virtual seconds per wall second")
@click.option("--device-upstream", help="Base URL of the physical device or emulator for forwarding")
@click.option("--with-emulators/--no-emulators", default=False, show_default=True,
              help="Also serve an emulated device per serial on the vendor routes")
@execution_log_option
@click.pass_context
def serve(ctx: click.Context, input_path, count, serials, bind, acceleration, device_upstream, with_emulators,
          execution_log):
    """Run the communication server for a fleet of twins."""

    config = _server_config(ctx, bind, acceleration, device_upstream)
    instances = _load_fleet(input_path, count, serials)
    profile = _delay_profile(execution_log)
    twins = [TwinRuntime(instance.clone(), delay_profile=profile) for instance in instances]
    emulators = [ReferenceEmulator(EmulatorConfig(), instance) for instance in instances] if with_emulators else []
    _serve_blocking(start_server(twins, config, emulators))


@cli.command()
@input_option
@count_option
@serials_option
@click.option("--bind")
@click.option("--acceleration", type=float)
@click.option("--quirk-rate", type=click.FloatRange(0, 1), default=None, help="Defaults to DTW_QUIRK_RATE")
@click.option("--seed", type=int, default=None)
@click.option("--emulator-config", type=click.Path(exists=True, dir_okay=False),
              help="EmulatorConfig JSON (latency bands, quirk_rate, dispense_busy_ms, seed)")
@click.pass_context
def emulate(ctx: click.Context, input_path, count, serials, bind, acceleration, quirk_rate, seed, emulator_config):
    """Run emulated devices on the vendor routes."""

    config = _server_config(ctx, bind, acceleration)
    cfg = _emulator_config(emulator_config, quirk_rate, seed)
    instances = _load_fleet(input_path, count, serials)
    _serve_blocking(start_server([], config, [ReferenceEmulator(cfg, instance) for instance in instances]))


def _emulator_config(path: Optional[str], quirk_rate: Optional[float], seed: Optional[int]):

    data = json_encoder.read_json(path) if path else {}
    if quirk_rate is not None:
        data["quirk_rate"] = quirk_rate
    if seed is not None:
        data["seed"] = seed
    return EmulatorConfig.model_validate(data)


@cli.command()
@input_option
@click.option("--hours", type=float, default=1, show_default=True)
@click.option("--rate", type=int, default=None, help="Requests per virtual minute (30 up to 4 h, else 20)")
@click.option("--seed", type=int, default=None, help="Seeds the corpus, the twin and the emulator")
@click.option("--invalid-rate", type=click.FloatRange(0, 1), default=None)
@click.option("--quirk-rate", type=click.FloatRange(0, 1), default=None)
@click.option("--custom", is_flag=True, help="Allow durations and rates outside the standard set")
@click.option("--twin-url", help="Fork to a live twin server instead of an in-process twin")
@click.option("--device-url", help="Fork to a live device (or emulator) server")
@execution_log_option
@click.option("--out", type=click.Path(file_okay=False), required=True)
def run(input_path, hours, rate, seed, invalid_rate, quirk_rate, custom, twin_url, device_url, execution_log, out):
    """Fork a seeded random corpus to a twin and the device and record paired traces."""

    seed = SETTINGS.SEED if seed is None else seed
    plan = _validated(RunPlan, hours=hours, rate=rate, custom=custom)
    gen_cfg = GeneratorConfig(seed=seed, **({} if invalid_rate is None else {"invalid_rate": invalid_rate}))
    instance = _load_fleet(input_path, 1, None)[0]
    twin_endpoint = HttpEndpoint(twin_url, name="twin") if twin_url else None
    device_endpoint = HttpEndpoint(device_url, name="device") if device_url else None
    try:
        result = run_experiment(plan, instance, gen_cfg, _emulator_config(None, quirk_rate, seed),
                                twin_endpoint=twin_endpoint, device_endpoint=device_endpoint,
                                delay_profile=_delay_profile(execution_log))
    finally:
        for endpoint in (twin_endpoint, device_endpoint):
            if endpoint is not None:
                endpoint.close()
    result.save(out)
    click.echo(f"{len(result.corpus)} paired records written to {out}")


@cli.command()
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), required=True,
              help="corpus.jsonl written by `run`")
@input_option
@click.option("--sizes", default="10..100", show_default=True, help="Fleet sizes, e.g. 10..100 or 10,20")
@click.option("--seed", type=int, default=None)
@click.option("--quirk-rate", type=click.FloatRange(0, 1), default=None)
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Defaults to DTW_HARNESS_WORKERS")
@execution_log_option
@click.option("--out", type=click.Path(file_okay=False), required=True)
def batch(corpus, input_path, sizes, seed, quirk_rate, workers, execution_log, out):
    """Replay a corpus against fleets of growing size, twins running concurrently."""

    seed = SETTINGS.SEED if seed is None else seed
    instance = _load_fleet(input_path, 1, None)[0]
    result = run_batch(load_corpus(corpus), instance, _parse_sizes(sizes),
                       _emulator_config(None, quirk_rate, seed), base_seed=seed, workers=workers,
                       delay_profile=_delay_profile(execution_log))
    result.save(out)
    click.echo(f"{len(result.fleets)} fleet size(s) written to {out}")


@cli.command()
@click.option("--pairs", type=click.Path(exists=True, file_okay=False), required=True,
              help="A run directory or a directory of run directories")
@click.option("--batch", "batch_dir", type=click.Path(exists=True, file_okay=False), help="Directory written by `batch`")
@click.option("--tolerance-ms", type=click.FloatRange(min=0), default=None, help="Defaults to DTW_TOLERANCE_MS")
@click.option("--out", type=click.Path(file_okay=False), help="Defaults to the --pairs directory")
def fidelity(pairs, batch_dir, tolerance_ms, out):
    """Similarity report: alignment of both channels, Wilcoxon and Fisher p-values."""

    cfg = AlignmentConfig(**({} if tolerance_ms is None else {"tolerance_ms": tolerance_ms}))
    batches = [BatchResult.load(batch_dir)] if batch_dir else []
    result = report(load_runs(pairs), batches, cfg)
    out_dir = result.write(out or pairs)
    click.echo(json_encoder.dumps(result.model_dump(), pretty=True).decode())
    logger.info(f"Report written to {out_dir}")


def _validated(model, **values):
    try:
        return model(**values)
    except ValueError as e:
        raise click.UsageError(str(e))


def main():
    cli(prog_name="dtw")


if __name__ == "__main__":
    main()
