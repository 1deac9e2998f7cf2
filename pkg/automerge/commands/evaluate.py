"""
This module contains the command that scores a merge result against ground truth.

It includes:
- evaluate: writes metrics.json and pr_curve.csv and prints a summary table.
"""

from pathlib import Path

import click
import pandas as pd

from automerge.commands.utils import (READ_ERRORS, atomic_output, malformed_input, missing_input,
                                      pipeline_error, write_csv, write_json)
from automerge.dataset import (CLOSURES_FILE, METRICS_FILE, PARTITION_FILE, POSES_FILE, PR_FILE,
                               TRUTH_FILE, WORLD_FILE, read_result, read_truth)
from automerge.errors import AutoMergeError
from automerge.sim import evaluate as evaluate_result


def summary_table(report, top_n: int) -> pd.DataFrame:
    """
    Builds the console table: recall@1 (and @5 when top_n allows), precision,
    merging accuracy, worst cluster ATE and Rand index.
    """
    rows = [("recall@1", report.recall_at_k[0])]
    if top_n >= 5:
        rows.append(("recall@5", report.recall_at_k[4]))
    rows += [("precision", report.precision),
             ("merging_accuracy", report.merging_accuracy),
             ("ate_max", max(report.ate_per_cluster.values(), default=0.0)),
             ("rand_index", report.rand_index)]
    return pd.DataFrame({"metric": [r[0] for r in rows],
                         "value": [f"{r[1]:.3f}" for r in rows]})


@click.command("eval")
@click.argument("result_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--truth", "truth_dir", type=click.Path(file_okay=False, path_type=Path),
              required=True, help="Dataset directory holding world.jsonl and truth.json.")
@click.option("--top-n", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Where to write metrics (default: the result directory).")
def evaluate(result_dir, truth_dir, top_n, out_dir):
    """
    Evaluates a merge result.

    Args:
        result_dir (Path): Output of the merge command.
        truth_dir (Path): Dataset directory.
        top_n (int): Largest k of recall@k.
        out_dir (Path): Metrics directory.

    Raises:
        CommandError: Exit 3 when an input cannot be parsed, 4 when result keys
            are absent from the ground truth, 5 when an input file is missing.
    """
    for path in (result_dir / PARTITION_FILE, result_dir / CLOSURES_FILE,
                 result_dir / POSES_FILE, truth_dir / WORLD_FILE, truth_dir / TRUTH_FILE):
        if not path.is_file():
            raise missing_input(path)
    try:
        result = read_result(result_dir)
    except READ_ERRORS as exc:
        raise malformed_input(result_dir, exc) from exc
    try:
        truth = read_truth(truth_dir)
    except READ_ERRORS as exc:
        raise malformed_input(truth_dir, exc) from exc
    try:
        report = evaluate_result(result, truth, top_n)
    except AutoMergeError as exc:
        raise pipeline_error(exc) from exc

    pr = pd.DataFrame([p.model_dump() for p in report.pr_curve],
                      columns=["threshold", "precision", "recall"])
    with atomic_output(out_dir or result_dir) as staging:
        write_json(staging / METRICS_FILE, report.model_dump(mode="json"))
        write_csv(staging / PR_FILE, pr)
    click.echo(summary_table(report, top_n).to_string(index=False))
