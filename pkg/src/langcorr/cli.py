"""Operator command line: task generation, training, evaluation, ablations,
checkpoint inspection, and the interactive session service."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import config as cfgmod
from . import gridworld as gw
from . import pusher as pu
from . import runs
from .config import ConfigError, RunConfig


def _fail(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


def _config_from_options(config_path, overrides) -> RunConfig:
    items = {}
    if config_path:
        with open(config_path) as f:
            items = cfgmod.parse_items(f.read())
    for ov in overrides:
        if "=" not in ov:
            _fail(f"--set expects key=value, got {ov!r}")
        key, _, value = ov.partition("=")
        items[key.strip()] = value.strip()
    try:
        return cfgmod.from_items(items)
    except ConfigError as e:
        _fail(str(e))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


_config_opts = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 help="key=value config file."),
    click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                 help="Override a config key (repeatable)."),
]


def _with_config_opts(fn):
    for opt in reversed(_config_opts):
        fn = opt(fn)
    return fn


@main.command("gen-tasks")
@_with_config_opts
@click.option("--out-dir", required=True, type=click.Path())
def gen_tasks(config_path, overrides, out_dir):
    """Write train/test task-set files and a split manifest."""
    cfg = _config_from_options(config_path, overrides)
    out = Path(out_dir)
    try:
        train_path, test_path = runs.write_task_files(cfg, out)
    except (ValueError, OSError) as e:
        _fail(str(e))
    manifest = {
        "domain": cfg.domain, "seed": cfg.seed, "holdout": cfg.holdout,
        "n_train": cfg.n_train, "n_test": cfg.n_test,
        "train_file": train_path.name, "test_file": test_path.name,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True))
    click.echo(f"wrote {cfg.n_train} train / {cfg.n_test} test tasks to {out}")


@main.command()
@_with_config_opts
@click.option("--out-dir", type=click.Path(), help="Overrides config out_dir.")
def train(config_path, overrides, out_dir):
    """Meta-train a policy; writes a reproducible run directory."""
    cfg = _config_from_options(config_path, overrides)
    if out_dir:
        cfg.out_dir = out_dir
    try:
        run_dir = runs.train_run(cfg)
    except (ValueError, FloatingPointError, OSError) as e:
        _fail(str(e))
    click.echo(f"run complete: {run_dir}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--suite", default="main",
              type=click.Choice(list(runs.SUITES)))
@click.option("--tasks", "tasks_path", required=True,
              type=click.Path(exists=True), help="Task-set JSON-lines file.")
@click.option("--c-max", type=int, default=None,
              help="Correction rounds (default: from checkpoint / suite).")
@click.option("--correction-mode", default=None,
              help="Override the trained correction mode.")
@click.option("--seed", type=int, default=None,
              help="Eval seed (default GPL_SEED or 0).")
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--out-json", type=click.Path(), default=None)
def eval(checkpoint, suite, tasks_path, c_max, correction_mode, seed,
         out_csv, out_json):
    """Evaluate a checkpoint on a task set; writes metrics.csv rows."""
    if seed is None:
        import os
        seed = int(os.environ.get(cfgmod.GPL_SEED_ENV, "0"))
    try:
        report = runs.eval_run(checkpoint, suite, tasks_path, seed, out_csv,
                               c_max=c_max, correction_mode=correction_mode,
                               out_json=out_json)
    except (ValueError, OSError) as e:
        _fail(str(e))
    for rate, row in zip(report.mean_rates(), report.rows()):
        click.echo(f"{suite} C_{row['correction_count']} = {rate:.3f}")


@main.command()
@_with_config_opts
def ablate(config_path, overrides):
    """Train the ablation flag matrix (base / no_instruction /
    no_trajectory / immediate_only) as sub-runs of out_dir."""
    cfg = _config_from_options(config_path, overrides)
    if not cfg.out_dir:
        _fail("out_dir is required for ablate")
    try:
        root = runs.ablate_run(cfg)
    except (ValueError, FloatingPointError, OSError) as e:
        _fail(str(e))
    click.echo(f"ablation runs complete: {root}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
def serve(checkpoint, host, port):
    """Serve interactive correction sessions over HTTP."""
    import uvicorn

    from .service import create_app
    try:
        app = create_app(checkpoint)
    except (ValueError, OSError) as e:
        _fail(str(e))
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
def inspect(checkpoint):
    """Print a checkpoint summary (tensor counts, Adam step, config)."""
    try:
        summary = runs.inspect_checkpoint(checkpoint)
    except (ValueError, OSError) as e:
        _fail(str(e))
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
