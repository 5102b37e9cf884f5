from __future__ import annotations

import contextlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterator

import click

from .errors import SolverTimeout, TomographyError
from .events import ProgressEmitter, ProgressEvent
from .generator import generate_random_instance
from .instance import labeling_to_image, load_instance, save_instance
from .models import KERNELS, STEP_RULES, SolverConfig, load_config
from .paths import app_data_dir
from .pgm import write_pgm
from .reports import write_result
from .runner import BenchmarkRunner
from .solver import METHODS, solve_instance
from .state import RunStateStore


logger = logging.getLogger(__name__)


@contextlib.contextmanager
def _cli_errors() -> Iterator[None]:
    try:
        yield
    except TomographyError as exc:
        error = click.ClickException(str(exc))
        error.exit_code = exc.exit_code
        raise error from exc


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--app-data", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--verbose", "-v", is_flag=True, help="Log solver progress events.")
@click.pass_context
def cli(ctx: click.Context, app_data: Path | None, config_path: Path | None, verbose: bool) -> None:
    """Non-binary discrete tomography solver with tight dual bounds."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    with _cli_errors():
        config = load_config(config_path)
    progress = ProgressEmitter()
    if verbose:
        progress.subscribe(_log_progress)
    ctx.obj = {"app_data": app_data, "config": config, "progress": progress}


def _log_progress(event: ProgressEvent) -> None:
    logger.info("%(task_id)s %(phase)s %(progress)s%% %(message)s", event.to_dict())


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=8, show_default=True)
@click.option("--height", type=int, default=8, show_default=True)
@click.option("--k", "k", type=int, default=3, show_default=True)
@click.option("--directions", default="hv", show_default=True, help="Any of h, v, d (both diagonals).")
@click.option("--smoothing", type=int, default=2, show_default=True)
@click.option("--count", type=int, default=1, show_default=True, help="Consecutive seeds written into --out as a directory.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def generate(
    seed: int,
    width: int,
    height: int,
    k: int,
    directions: str,
    smoothing: int,
    count: int,
    out: Path,
) -> None:
    """Write random instances plus their ground-truth PGM images."""
    if count < 1:
        raise click.ClickException("--count must be >= 1")
    if count == 1 and out.suffix == ".json":
        targets = [(seed, out)]
    else:
        targets = [(seed + offset, out / f"instance_{seed + offset:04d}.json") for offset in range(count)]
    with _cli_errors():
        for instance_seed, path in targets:
            instance, ground_truth = generate_random_instance(instance_seed, width, height, k, directions, smoothing)
            save_instance(instance, path)
            write_pgm(path.with_suffix(".pgm"), labeling_to_image(instance, ground_truth), k - 1)
            click.echo(f"Wrote {path}")


@cli.command()
@click.argument("instance_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--method", type=click.Choice(METHODS), default="ctg", show_default=True)
@click.option("--max-iters", type=int, default=None)
@click.option("--step-rule", type=click.Choice(STEP_RULES), default=None)
@click.option("--time-limit", type=float, default=None, help="Seconds for the ascent and the search.")
@click.option("--workers", type=int, default=None)
@click.option("--deterministic", is_flag=True, help="Solve subproblems sequentially for bit-stable traces.")
@click.option("--kernel", type=click.Choice(KERNELS), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.option("--output", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--image", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the reconstruction as PGM.")
@click.pass_context
def solve(
    ctx: click.Context,
    instance_path: Path,
    method: str,
    max_iters: int | None,
    step_rule: str | None,
    time_limit: float | None,
    workers: int | None,
    deterministic: bool,
    kernel: str | None,
    as_json: bool,
    output: Path | None,
    image: Path | None,
) -> None:
    """Solve one instance and print its bounds."""
    with _cli_errors():
        config = _solver_config(ctx, max_iters, step_rule, time_limit, workers, deterministic, kernel)
        instance = load_instance(instance_path)
        result = solve_instance(
            instance, method, config, progress_callback=ctx.obj["progress"], instance_name=instance_path.stem
        )
        if output:
            write_result(result, output)
        if image and result.labeling is not None:
            write_pgm(image, labeling_to_image(instance, result.labeling), instance.k - 1)
        if as_json:
            click.echo(json.dumps(result.to_dict(), indent=2))
        else:
            click.echo(f"{method} {instance_path.stem}: {result.status}")
            click.echo(f"Lower bound: {result.lower_bound:.12g}")
            click.echo(f"Primal value: {'none' if result.primal_value is None else f'{result.primal_value:.12g}'}")
            click.echo(f"Certified: {'yes' if result.certified else 'no'}")
        if result.timed_out:
            raise SolverTimeout(f"time limit reached; partial result for {instance_path.name}")


@cli.command()
@click.argument("instances", type=click.Path(exists=True, path_type=Path), nargs=-1, required=True)
@click.option("--methods", default="std,ctg", show_default=True, help="Comma-separated methods.")
@click.option("--out-csv", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--run-id", default=None)
@click.option("--deterministic", is_flag=True)
@click.pass_context
def compare(
    ctx: click.Context,
    instances: tuple[Path, ...],
    methods: str,
    out_csv: Path | None,
    run_id: str | None,
    deterministic: bool,
) -> None:
    """Run several methods on every instance and write comparison reports."""
    wanted = [method.strip() for method in methods.split(",") if method.strip()]
    unknown = [method for method in wanted if method not in METHODS]
    if unknown or not wanted:
        raise click.BadParameter(f"choose from {', '.join(METHODS)}", param_hint="--methods")
    with _cli_errors():
        config = _solver_config(ctx, None, None, None, None, deterministic, None)
        state = BenchmarkRunner(app_data_dir=ctx.obj["app_data"], config=config).compare(
            list(instances),
            wanted,
            run_id=run_id,
            out_csv=out_csv,
            progress_callback=ctx.obj["progress"],
        )
    click.echo(f"Run {state.run_id} {state.status}: {len(state.rows)} instances")
    click.echo(f"Reports: {state.run_dir / 'reports'}")


@cli.command()
@click.argument("run_id")
@click.pass_context
def resume(ctx: click.Context, run_id: str) -> None:
    """Resume an interrupted comparison run."""
    runner = BenchmarkRunner(app_data_dir=ctx.obj["app_data"])
    if not runner.store.exists(run_id):
        raise click.ClickException(f"Run not found: {run_id}")
    with _cli_errors():
        state = runner.resume(run_id, progress_callback=ctx.obj["progress"])
    click.echo(f"Run {state.run_id} {state.status}: {len(state.rows)} instances")


@cli.command()
@click.argument("run_id")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def report(ctx: click.Context, run_id: str, as_json: bool) -> None:
    """Show a comparison run report."""
    runner = BenchmarkRunner(app_data_dir=ctx.obj["app_data"])
    if not runner.store.exists(run_id):
        raise click.ClickException(f"Run not found: {run_id}")
    payload = runner.report(run_id)
    if as_json:
        click.echo(json.dumps(payload, indent=2))
        return
    summary = payload["summary"]
    click.echo(f"Run {payload['run_id']}: {payload['status']} ({payload['phase']})")
    click.echo(f"Instances: {summary['instances']} ({summary['failed_instances']} failed)")
    for method, count in summary["certified"].items():
        click.echo(f"Certified by {method}: {count}")
    click.echo(f"CTG strictly better than STD: {summary['ctg_strictly_better']}")


@cli.command()
@click.argument("run_id")
@click.option("--yes", is_flag=True, help="Confirm deletion of the local run directory.")
@click.pass_context
def cleanup(ctx: click.Context, run_id: str, yes: bool) -> None:
    """Delete a local run directory."""
    if not yes:
        raise click.ClickException("Pass --yes to delete the local run directory")
    deleted = RunStateStore(app_data_dir(ctx.obj["app_data"])).delete(run_id)
    if not deleted:
        raise click.ClickException(f"Run not found: {run_id}")
    click.echo(f"Run {run_id} deleted")


def _solver_config(
    ctx: click.Context,
    max_iters: int | None,
    step_rule: str | None,
    time_limit: float | None,
    workers: int | None,
    deterministic: bool,
    kernel: str | None,
) -> SolverConfig:
    config: SolverConfig = ctx.obj["config"].with_overrides(
        max_iters=max_iters,
        step_rule=step_rule,
        time_limit_seconds=time_limit,
        workers=workers,
        deterministic=deterministic or None,
        kernel=kernel,
    )
    if time_limit is not None:
        config = replace(config, search=replace(config.search, time_limit_seconds=time_limit))
    return config


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="ctg-tomography", standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
