"""
This module contains the command that merges a dataset.

It includes:
- merge: offline or incremental merging, writing partition.json, closures.csv,
  poses.csv, state.json and timeline.csv.
"""

import logging
import os
from pathlib import Path

import click
import pandas as pd

from automerge.commands.utils import (EXIT_PIPELINE, READ_ERRORS, CommandError, atomic_output,
                                      malformed_input, missing_input, pipeline_error, write_csv,
                                      write_json)
from automerge.dataset import (CLOSURES_FILE, PARTITION_FILE, POSES_FILE, STATE_FILE,
                               TIMELINE_FILE, WORLD_FILE, closures_frame, poses_frame,
                               read_world)
from automerge.errors import AutoMergeError
from automerge.server import run_incremental, run_offline, state_to_dict
from merge_config import load_config

logger = logging.getLogger(__name__)


@click.command("merge")
@click.argument("dataset_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="TOML run configuration; defaults apply when omitted.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
              required=True, help="Result directory to write.")
@click.option("--mode", type=click.Choice(["offline", "incremental"]), default="offline",
              show_default=True)
@click.option("--order-seed", type=int, default=None,
              help="Streaming seed for incremental mode; overrides [seeds].order.")
@click.option("--batch", type=click.IntRange(min=1), default=None,
              help="Keyframes per streamed batch; overrides the configured batch.")
@click.option("--jobs", type=click.IntRange(min=1), default=None,
              help="Loop-detection workers (default: logical cores).")
def merge(dataset_dir, config_path, out_dir, mode, order_seed, batch, jobs):
    """
    Merges the segments of a dataset into clustered global maps.

    Args:
        dataset_dir (Path): Directory holding world.jsonl.
        config_path (Path): Configuration file.
        out_dir (Path): Result directory, created if absent.
        mode (str): "offline" or "incremental".
        order_seed (int): Streaming seed override.
        batch (int): Batch size override.
        jobs (int): Worker count.

    Raises:
        CommandError: Exit 2 on configuration errors, 3 on pipeline errors
            (including an empty dataset), 5 if world.jsonl is missing.
    """
    jobs = jobs or os.cpu_count() or 1
    try:
        cfg = load_config(config_path)
    except AutoMergeError as exc:
        raise pipeline_error(exc) from exc
    world_path = dataset_dir / WORLD_FILE
    if not world_path.is_file():
        raise missing_input(world_path)
    try:
        segments, _ = read_world(dataset_dir)
    except READ_ERRORS as exc:
        raise malformed_input(world_path, exc) from exc
    if not segments:
        raise CommandError("[server] no segments", EXIT_PIPELINE)

    try:
        if mode == "offline":
            state = run_offline(segments, cfg, jobs)
            timeline = pd.DataFrame([{"batch": 0, "keyframes": sum(len(s) for s in segments),
                                      "clusters": state.partition.k,
                                      "closures": len(state.closures)}])
        else:
            state, timeline = run_incremental(segments, cfg, order_seed, batch, jobs)
    except AutoMergeError as exc:
        raise pipeline_error(exc) from exc

    with atomic_output(out_dir) as staging:
        write_json(staging / PARTITION_FILE, state.partition.to_dict())
        write_csv(staging / CLOSURES_FILE, closures_frame(state.closures))
        write_csv(staging / POSES_FILE, poses_frame(state.global_poses))
        write_json(staging / STATE_FILE, state_to_dict(state))
        write_csv(staging / TIMELINE_FILE, timeline)
    logger.info("merge finished: %d clusters, %d closures", state.partition.k,
                len(state.closures))
    click.echo(f"{state.partition.k} clusters, {len(state.closures)} closures -> {out_dir}")
