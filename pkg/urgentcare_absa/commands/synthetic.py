from dataclasses import replace
from pathlib import Path
from typing import Optional

import click

from ..pipeline import run_e2e_check, run_synthesize
from ..utils import format_output, handle_error


@click.command()
@click.argument('out_dir', type=click.Path(file_okay=False), default='synthetic')
@click.option('--n-facilities', type=click.IntRange(min=20), help='Number of urgent care facilities')
@click.option('--finances-coverage', type=click.FloatRange(0.0, 1.0),
              help='Share of facilities with enough Finances mentions')
@click.pass_context
def synthesize(ctx, out_dir: str, n_facilities: Optional[int], finances_coverage: Optional[float]):
    """Generate a corpus with a planted rating model into OUT_DIR."""
    try:
        config_manager = ctx.obj['config']
        synthetic = config_manager.to_run_config().synthetic
        if n_facilities is not None:
            synthetic = replace(synthetic, n_facilities=n_facilities)
        if finances_coverage is not None:
            synthetic = replace(synthetic, finances_coverage=finances_coverage)
        paths = run_synthesize(config_manager, Path(out_dir), synthetic)
        click.echo(f"Synthetic corpus (seed {synthetic.seed}) written to {out_dir}")
        click.echo(f"Run it with: urgentcare-absa --config {paths['config']} ingest")
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='synthesize')


@click.command('e2e-check')
@click.option('--sensitivity', is_flag=True, help='Also check the Finances filtering sensitivity run')
@click.option('--work-dir', type=click.Path(file_okay=False), help='Keep scratch runs here instead of a temp dir')
@click.option('--keep', is_flag=True, help='Keep the temporary scratch directory')
@click.option('--format', 'output_format', default='human',
              type=click.Choice(['human', 'json', 'yaml']), help='Output format')
@click.pass_context
def e2e_check(ctx, sensitivity: bool, work_dir: Optional[str], keep: bool, output_format: str):
    """Synthesize, run every stage twice and check determinism and coefficient recovery."""
    try:
        result = run_e2e_check(ctx.obj['config'], work_dir=work_dir, sensitivity=sensitivity, keep=keep)
        if output_format == 'human':
            for check in result['checks']:
                click.echo(f"PASS  {check['name']}: {check['detail']}")
            click.echo(f"All {len(result['checks'])} checks passed.")
        else:
            click.echo(format_output(result, output_format))
    except Exception as e:
        handle_error(e, ctx.obj.get('logger'), ctx.obj.get('verbose', False), stage='e2e-check')
