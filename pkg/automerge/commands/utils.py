"""
This module provides helpers shared by the CLI commands.

Functions:
    - pipeline_error(exc: AutoMergeError)
    -> CommandError: Maps a library error to the exit code of its category.
    - missing_input(path) / malformed_input(path, exc)
    -> CommandError: Exit 5 for absent files, 3 for unreadable ones.
    - atomic_output(out_dir: Path)
    -> context manager: Stages output files and moves them in only on success.
    - write_text / write_json / write_csv
    -> deterministic file writers.
    - SvgCanvas
    -> deterministic SVG builder used by the plot command, placed with
       matplotlib transforms and colored with its tab10 palette.
"""

import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence

import click
import pandas as pd
from matplotlib import colormaps
from matplotlib.colors import to_hex
from matplotlib.transforms import Bbox, BboxTransform

from automerge.errors import AutoMergeError, ConfigError, KeyMismatch

EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_KEY_MISMATCH = 4
EXIT_MISSING_INPUT = 5

PALETTE = [to_hex(c) for c in colormaps["tab10"].colors]


class CommandError(click.ClickException):
    """
    A failure reported to the user with a specific exit code.

    Args:
        message (str): Detail shown after "Error:".
        exit_code (int): Process exit status.
    """

    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def pipeline_error(exc: AutoMergeError) -> CommandError:
    """
    Converts a library error into a CommandError naming the failing module.

    Args:
        exc (AutoMergeError): The error raised by the pipeline.

    Returns:
        CommandError: Exit 2 for configuration errors, 4 for key mismatches, 3 otherwise.
    """
    if isinstance(exc, ConfigError):
        code = EXIT_CONFIG
    elif isinstance(exc, KeyMismatch):
        code = EXIT_KEY_MISMATCH
    else:
        code = EXIT_PIPELINE
    return CommandError(f"[{exc.module}] {exc}", code)


def missing_input(path: Path) -> CommandError:
    return CommandError(f"missing input: {path}", EXIT_MISSING_INPUT)


# json, pandas and pydantic parse failures are all ValueError subclasses.
READ_ERRORS = (KeyError, TypeError, ValueError, AutoMergeError)


def malformed_input(path: Path, exc: Exception) -> CommandError:
    """
    Reports an input file that exists but cannot be parsed.

    Args:
        path (Path): File or directory being read.
        exc (Exception): The parse error.

    Returns:
        CommandError: Exit 3, naming the path and the first line of the error.
    """
    detail = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    return CommandError(f"[dataset] malformed input {path}: {detail}", EXIT_PIPELINE)


@contextmanager
def atomic_output(out_dir: Path) -> Iterator[Path]:
    """
    Yields a staging directory whose files replace those in out_dir on success.

    On any exception the staging directory is removed and out_dir keeps its
    previous content.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    for item in sorted(staging.iterdir()):
        os.replace(item, out_dir / item.name)
    staging.rmdir()


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def write_json(path: Path, data) -> None:
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".staging-", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        write_text(Path(tmp), text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _fmt(value: float) -> str:
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


class SvgCanvas:
    """
    Collects SVG elements in data coordinates and renders a standalone document.

    A matplotlib BboxTransform maps data coordinates into the drawing area with
    the y axis pointing up; equal_aspect keeps meters square for map plots.
    """

    def __init__(self, bounds: Sequence[float], width: int = 800, height: int = 600,
                 margin: int = 40, equal_aspect: bool = False):
        x_min, y_min, x_max, y_max = bounds
        x_max = max(x_max, x_min + 1e-9)
        y_max = max(y_max, y_min + 1e-9)
        self.width, self.height, self.margin = width, height, margin
        draw_w, draw_h = width - 2 * margin, height - 2 * margin
        if equal_aspect:
            scale = min(draw_w / (x_max - x_min), draw_h / (y_max - y_min))
            draw_w, draw_h = scale * (x_max - x_min), scale * (y_max - y_min)
        data_box = Bbox.from_extents(x_min, y_min, x_max, y_max)
        pixel_box = Bbox.from_extents(margin, height - margin, margin + draw_w,
                                      height - margin - draw_h)
        self._transform = BboxTransform(data_box, pixel_box)
        self._elements: list[str] = []

    def _map(self, x: float, y: float) -> tuple[str, str]:
        px, py = self._transform.transform((float(x), float(y)))
        return _fmt(px), _fmt(py)

    def polyline(self, points, color: str, stroke_width: float = 1.5) -> None:
        coords = " ".join(",".join(self._map(x, y)) for x, y in points)
        self._elements.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                              f'stroke-width="{stroke_width}"/>')

    def line(self, a, b, color: str, stroke_width: float = 1.0) -> None:
        (x1, y1), (x2, y2) = self._map(*a), self._map(*b)
        self._elements.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{color}" '
                              f'stroke-width="{stroke_width}"/>')

    def bar(self, x0: float, x1: float, height: float, color: str) -> None:
        (left, top), (right, bottom) = self._map(x0, height), self._map(x1, 0.0)
        w = _fmt(float(right) - float(left))
        h = _fmt(float(bottom) - float(top))
        self._elements.append(f'<rect x="{left}" y="{top}" width="{w}" height="{h}" '
                              f'fill="{color}"/>')

    def text(self, x: float, y: float, label: str, size: int = 12) -> None:
        px, py = self._map(x, y)
        self._elements.append(f'<text x="{px}" y="{py}" font-size="{size}" '
                              f'font-family="sans-serif">{label}</text>')

    def title(self, label: str) -> None:
        self._elements.append(f'<text x="{self.margin}" y="{self.margin // 2}" font-size="14" '
                              f'font-family="sans-serif">{label}</text>')

    def render(self) -> str:
        body = "\n".join(self._elements)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>\n'
                f"{body}\n</svg>\n")
