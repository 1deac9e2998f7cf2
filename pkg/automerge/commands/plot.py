"""
This module contains the command that renders result files as SVG figures.

It includes:
- map_svg: one polyline per segment in the merged frame plus a line per closure.
- pr_svg: the precision-recall curve.
- recall_svg: recall@k bars.
- timeline_svg: cluster count over streamed batches.
- plot: the click command dispatching on --kind.
"""

import json
from pathlib import Path

import click
import pandas as pd
from matplotlib.ticker import MaxNLocator

from automerge.commands.utils import (PALETTE, READ_ERRORS, SvgCanvas, atomic_write_text,
                                      malformed_input, missing_input)
from automerge.dataset import CLOSURES_FILE, METRICS_FILE, POSES_FILE, PR_FILE, TIMELINE_FILE

REQUIRED_INPUTS = {
    "map": (POSES_FILE, CLOSURES_FILE),
    "pr": (PR_FILE,),
    "recall": (METRICS_FILE,),
    "timeline": (TIMELINE_FILE,),
}


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def _ticks(lo: float, hi: float) -> list[float]:
    return [float(t) for t in MaxNLocator(nbins=5).tick_values(lo, hi) if lo <= t <= hi]


def _axes(canvas: SvgCanvas, x_range, y_range, x_label: str, y_label: str) -> None:
    canvas.line((x_range[0], y_range[0]), (x_range[1], y_range[0]), "#444444")
    canvas.line((x_range[0], y_range[0]), (x_range[0], y_range[1]), "#444444")
    for x in _ticks(*x_range):
        canvas.text(x, y_range[0], f"{x:g}", size=10)
    for y in _ticks(*y_range):
        canvas.text(x_range[0], y, f"{y:g}", size=10)
    canvas.text(x_range[1], y_range[0], x_label)
    canvas.text(x_range[0], y_range[1], y_label)


def map_svg(result_dir: Path) -> str:
    """
    Draws the merged trajectories and their closure links.

    Args:
        result_dir (Path): Directory with poses.csv and closures.csv.

    Returns:
        str: The SVG document.
    """
    poses = _read_csv(result_dir / POSES_FILE)
    closures = _read_csv(result_dir / CLOSURES_FILE)
    if poses.empty:
        bounds = (0.0, 0.0, 1.0, 1.0)
    else:
        bounds = (poses["x"].min(), poses["y"].min(), poses["x"].max(), poses["y"].max())
    canvas = SvgCanvas(bounds, equal_aspect=True)
    lookup = {}
    n_segments = 0
    for n, (_, group) in enumerate(poses.sort_values(["segment", "index"]).groupby("segment")):
        canvas.polyline(zip(group["x"], group["y"]), PALETTE[n % len(PALETTE)])
        lookup.update({(s, k): (x, y) for s, k, x, y in
                       zip(group["segment"], group["index"], group["x"], group["y"])})
        n_segments += 1
    n_links = 0
    for s_i, k_i, s_j, k_j in zip(closures["seg_i"], closures["k_i"], closures["seg_j"],
                                  closures["k_j"]):
        a, b = lookup.get((s_i, k_i)), lookup.get((s_j, k_j))
        if a is not None and b is not None:
            canvas.line(a, b, "#000000", 0.5)
            n_links += 1
    canvas.title(f"{n_segments} segments, {n_links} closures")
    return canvas.render()


def pr_svg(result_dir: Path) -> str:
    pr = _read_csv(result_dir / PR_FILE).sort_values(["recall", "precision"], kind="stable")
    canvas = SvgCanvas((0.0, 0.0, 1.0, 1.0))
    _axes(canvas, (0.0, 1.0), (0.0, 1.0), "recall", "precision")
    canvas.polyline(zip(pr["recall"], pr["precision"]), PALETTE[0], 2.0)
    canvas.title("precision-recall")
    return canvas.render()


def recall_svg(result_dir: Path) -> str:
    metrics = json.loads((result_dir / METRICS_FILE).read_text(encoding="utf-8"))
    recall = metrics["recall_at_k"]
    canvas = SvgCanvas((0.5, 0.0, len(recall) + 0.5, 1.0))
    _axes(canvas, (0.5, len(recall) + 0.5), (0.0, 1.0), "N", "recall@N")
    for k, value in enumerate(recall, start=1):
        canvas.bar(k - 0.4, k + 0.4, value, PALETTE[0])
    canvas.title("recall@N")
    return canvas.render()


def timeline_svg(result_dir: Path) -> str:
    timeline = _read_csv(result_dir / TIMELINE_FILE)
    x_max = float(max(timeline["batch"].max(), 1)) if not timeline.empty else 1.0
    y_max = float(timeline["clusters"].max() + 1) if not timeline.empty else 1.0
    canvas = SvgCanvas((0.0, 0.0, x_max, y_max))
    _axes(canvas, (0.0, x_max), (0.0, y_max), "batch", "clusters")
    canvas.polyline(zip(timeline["batch"], timeline["clusters"]), PALETTE[3], 2.0)
    canvas.title("cluster count per batch")
    return canvas.render()


BUILDERS = {"map": map_svg, "pr": pr_svg, "recall": recall_svg, "timeline": timeline_svg}


@click.command("plot")
@click.argument("result_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--kind", type=click.Choice(sorted(BUILDERS)), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path),
              required=True, help="SVG file to write.")
def plot(result_dir, kind, out_path):
    """
    Renders one figure from a result directory.

    Args:
        result_dir (Path): Merge (and evaluation) output directory.
        kind (str): map, pr, recall or timeline.
        out_path (Path): Destination SVG.

    Raises:
        CommandError: Exit 5 if an input required by the kind is missing, 3 if
            it cannot be parsed.
    """
    for name in REQUIRED_INPUTS[kind]:
        if not (result_dir / name).is_file():
            raise missing_input(result_dir / name)
    try:
        svg = BUILDERS[kind](result_dir)
    except READ_ERRORS as exc:
        raise malformed_input(result_dir, exc) from exc
    atomic_write_text(out_path, svg)
    click.echo(f"wrote {out_path}")
