import click

from ..pipeline import (run_aggregate, run_classify, run_evaluate, run_fit, run_ingest, run_join_census,
                        run_report)
from ..utils import format_output, handle_error

FORMAT_OPTION = click.option('--format', 'output_format', default='human',
                             type=click.Choice(['human', 'json', 'yaml']), help='Output format')


@click.command()
@FORMAT_OPTION
@click.pass_context
def ingest(ctx, output_format: str):
    """Load reviews and POIs and keep urgent care facilities in the configured regions."""
    try:
        summary = run_ingest(ctx.obj['config'])
        click.echo(format_output(summary, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='ingest')


@click.command()
@click.option('--progress/--no-progress', default=None, help='Show a progress line (default: when stderr is a TTY)')
@FORMAT_OPTION
@click.pass_context
def classify(ctx, progress, output_format: str):
    """Label every text review with aspect sentiments. Reruns resume where the last run stopped."""
    try:
        summary = run_classify(ctx.obj['config'], show_progress=progress)
        click.echo(format_output(summary, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='classify')


@click.command()
@click.option('--backends', help='Comma-separated prediction sets to score (default: all)')
@FORMAT_OPTION
@click.pass_context
def evaluate(ctx, backends, output_format: str):
    """Score prediction sets against majority-vote annotations."""
    try:
        config_manager = ctx.obj['config']
        if backends:
            config_manager.set('evaluate.backends', [b.strip() for b in backends.split(',') if b.strip()])
        results = run_evaluate(config_manager)
        click.echo(format_output(results, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='evaluate')


@click.command()
@click.option('--rating-source', type=click.Choice(['text', 'all']), help='Ratings averaged into mean_rating')
@FORMAT_OPTION
@click.pass_context
def aggregate(ctx, rating_source, output_format: str):
    """Build per-facility aspect profiles and regional summaries."""
    try:
        config_manager = ctx.obj['config']
        if rating_source:
            config_manager.set('aggregate.rating_source', rating_source)
        counts = run_aggregate(config_manager)
        click.echo(format_output(counts, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='aggregate')


@click.command('join-census')
@FORMAT_OPTION
@click.pass_context
def join_census(ctx, output_format: str):
    """Attach census block group covariates to each facility profile."""
    try:
        diagnostics = run_join_census(ctx.obj['config'])
        click.echo(format_output(diagnostics, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='join-census')


@click.command()
@click.option('--relaxed-finances', type=click.IntRange(min=0), help='Finances minimum for the sensitivity fit')
@click.option('--rating-source', type=click.Choice(['text', 'all']), help='Dependent variable')
@FORMAT_OPTION
@click.pass_context
def fit(ctx, relaxed_finances, rating_source, output_format: str):
    """Fit the rating models, interactions, VIF and correlations."""
    try:
        config_manager = ctx.obj['config']
        if relaxed_finances is not None:
            config_manager.set('policy.relaxed_finances', relaxed_finances)
        if rating_source:
            config_manager.set('aggregate.rating_source', rating_source)
        summary = run_fit(config_manager)
        click.echo(format_output(summary, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='fit')


@click.command()
@FORMAT_OPTION
@click.pass_context
def report(ctx, output_format: str):
    """Write regression tables, facility GeoJSON, box-plot and correlation files."""
    try:
        counts = run_report(ctx.obj['config'])
        click.echo(format_output(counts, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='report')
