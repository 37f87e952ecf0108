#!/usr/bin/env python3
"""
urgentcare-absa - Main entry point

Pipeline stages for aspect-based sentiment analysis of urgent care reviews,
from review ingestion to rating regressions and map-ready reports.
"""

import sys
from pathlib import Path

import click

# Add the package to Python path if running from source
if __name__ == '__main__':
    sys.path.insert(0, str(Path(__file__).parent.parent))

from . import __version__
from .commands import (aggregate, classify, config, e2e_check, evaluate, fit, ingest, join_census, report,
                       synthesize)
from .config import ConfigManager
from .core.absa import BackendKind
from .utils import CLILogger, handle_error


@click.group()
@click.option('--config', 'config_file', type=click.Path(dir_okay=False),
              help='Pipeline configuration file (default: ./urgentcare-absa.yaml if present)')
@click.option('--output-dir', type=click.Path(file_okay=False), help='Override output_dir')
@click.option('--seed', type=int, help='Override the random seed')
@click.option('--regions', help='Comma-separated regions to keep, e.g. DMV,FL')
@click.option('--min-reviews', type=click.IntRange(min=0), help='Minimum mentions per aspect for the fit sample')
@click.option('--backend', type=click.Choice([k.value for k in BackendKind]), help='Sentiment backend')
@click.option('--model', help='Model name for the remote-llm and replay-cache backends')
@click.option('--log-level', type=click.Choice(['debug', 'info', 'warning', 'error']),
              help='Set logging level')
@click.option('--verbose', '-v', is_flag=True, help='Print tracebacks on errors')
@click.version_option(version=__version__, prog_name='urgentcare-absa')
@click.pass_context
def cli(ctx, config_file, output_dir, seed, regions, min_reviews, backend, model, log_level, verbose):
    """
    urgentcare-absa - aspect-based sentiment analysis of urgent care reviews.

    Stages run in order and each reads the previous stage's artifacts from
    the output directory:

    \b
      urgentcare-absa --config run.yaml ingest
      urgentcare-absa --config run.yaml classify
      urgentcare-absa --config run.yaml evaluate
      urgentcare-absa --config run.yaml aggregate
      urgentcare-absa --config run.yaml join-census
      urgentcare-absa --config run.yaml fit
      urgentcare-absa --config run.yaml report

    `synthesize` writes a corpus with a planted rating model and
    `e2e-check` runs the whole pipeline on it.
    """
    ctx.ensure_object(dict)

    try:
        config_manager = ConfigManager(Path(config_file) if config_file else None)

        if output_dir:
            config_manager.set('output_dir', str(Path(output_dir).resolve()))
        if seed is not None:
            config_manager.set('seed', seed)
        if regions:
            config_manager.set('filters.regions', [r.strip() for r in regions.split(',') if r.strip()])
        if min_reviews is not None:
            config_manager.set('policy.min_per_aspect', min_reviews)
        if backend:
            config_manager.set('backend.kind', backend)
        if model:
            config_manager.set('backend.model', model)
        if log_level:
            config_manager.set('preferences.log_level', log_level)

        log_dir = None
        if ctx.invoked_subcommand not in (None, 'config'):
            log_dir = config_manager.resolve_path(config_manager.get('output_dir')) / 'logs'
        logger = CLILogger(config_manager, log_dir=log_dir)

        ctx.obj['config'] = config_manager
        ctx.obj['logger'] = logger
        ctx.obj['verbose'] = verbose
        ctx.call_on_close(logger.close)

    except Exception as e:
        handle_error(e, None, verbose, stage='config')


cli.add_command(ingest)
cli.add_command(classify)
cli.add_command(evaluate)
cli.add_command(aggregate)
cli.add_command(join_census)
cli.add_command(fit)
cli.add_command(report)
cli.add_command(synthesize)
cli.add_command(e2e_check)
cli.add_command(config)


def main():
    """Main entry point for the CLI."""
    try:
        cli()
    except KeyboardInterrupt:
        click.echo("\nInterrupted; rerun the same stage to resume.", err=True)
        sys.exit(1)


if __name__ == '__main__':
    main()
