"""
This module sets up the command-line application.

The main components are:
- The click group with the --verbose switch that configures logging once.
- Registration of the gen, merge, eval and plot commands.
"""

import logging

import click

from automerge.commands import evaluate, gen, merge, plot

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log pipeline detail at DEBUG level.")
def cli(verbose):
    """Multi-agent map merging: generate worlds, merge them and score the result."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format=LOG_FORMAT,
                        force=True)


cli.add_command(gen.gen)
cli.add_command(merge.merge)
cli.add_command(evaluate.evaluate)
cli.add_command(plot.plot)
