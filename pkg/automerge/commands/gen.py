"""
This module contains the command that generates synthetic datasets.

It includes:
- gen: builds a world from the configuration and writes world.jsonl and truth.json.
"""

import logging
from pathlib import Path

import click

from automerge.commands.utils import atomic_output, pipeline_error, write_text
from automerge.dataset import TRUTH_FILE, WORLD_FILE, dumps_truth, dumps_world
from automerge.errors import AutoMergeError
from automerge.sim import generate_world
from merge_config import load_config

logger = logging.getLogger(__name__)


@click.command("gen")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="TOML run configuration; defaults apply when omitted.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
              required=True, help="Dataset directory to write.")
def gen(config_path, out_dir):
    """
    Generates a synthetic world and writes it as a dataset.

    Args:
        config_path (Path): Configuration file.
        out_dir (Path): Output directory, created if absent.

    Raises:
        CommandError: Exit 2 on configuration errors, 3 on infeasible worlds.
    """
    try:
        cfg = load_config(config_path)
        segments, truth = generate_world(cfg.world)
    except AutoMergeError as exc:
        raise pipeline_error(exc) from exc
    with atomic_output(out_dir) as staging:
        write_text(staging / WORLD_FILE, dumps_world(segments))
        write_text(staging / TRUTH_FILE, dumps_truth(truth))
    n_keyframes = sum(len(seg) for seg in segments)
    click.echo(f"wrote {len(segments)} segments, {n_keyframes} keyframes to {out_dir}")
