import os
from dataclasses import replace

import click
from flask import Blueprint, current_app

from app.datasets import counts_to_rows, read_input
from app.heckman import heckman_fit
from app.middleware import ensure_output_dir, global_option, handle_cli_errors, run_manifest, write_json
from app.models import AnalysisConfig, AssumptionSpec, GibbsConfig, ModelSpec
from app.pipeline import run_analysis
from app.saturated import credible_intervals
from app.settings import parse_levels, read_analysis_config

analysis_bp = Blueprint('analysis', __name__, cli_group=None)

DEFAULT_MODELS = (ModelSpec('MAR', 'MAR'), ModelSpec('Sat', 'None', assumption=AssumptionSpec('None')))


def _defaults(input_path=None):
    return {
        'input_path': input_path,
        'draws': current_app.config['DEFAULT_DRAWS'],
        'seed': current_app.config['DEFAULT_SEED'],
        'levels': parse_levels(current_app.config['CREDIBLE_LEVELS']),
        'output_dir': current_app.config['OUTPUT_DIR'],
    }


@analysis_bp.cli.command('analyze')
@click.option('--input', 'input_path', type=click.Path(exists=True, dir_okay=False), help='Counts or row CSV')
@handle_cli_errors
def analyze(input_path):
    """Fit every configured model and write interval summaries"""
    config_path = global_option('config_path')
    if config_path:
        config = read_analysis_config(config_path, _defaults(input_path))
    else:
        defaults = _defaults(input_path)
        config = AnalysisConfig(input_path=input_path, models=DEFAULT_MODELS, draws=defaults['draws'],
                                seed=defaults['seed'], levels=defaults['levels'], output_dir=defaults['output_dir'])

    overrides = {k: v for k, v in (('input_path', input_path), ('seed', global_option('seed')),
                                   ('draws', global_option('draws')), ('output_dir', global_option('output_dir')))
                 if v is not None}
    config = replace(config, **overrides)
    if not config.input_path:
        raise click.UsageError('An input CSV is required (--input or [analysis] input)')

    current_app.logger.info(f"Analyzing {config.input_path} with {len(config.models)} models")
    counts, rows = read_input(config.input_path)
    report, fits = run_analysis(
        config, counts, rows,
        prior_attempts=current_app.config['PRIOR_ATTEMPTS'],
        bf_fail_threshold=current_app.config['BF_FAIL_THRESHOLD'],
        batch_size=current_app.config['BATCH_SIZE'],
    )

    out = ensure_output_dir(config.output_dir)
    write_json(os.path.join(out, 'report.json'), report.to_dict())
    report.interval_frame().to_csv(os.path.join(out, 'intervals.csv'), index=False)
    for fit in fits:
        frame = fit.export_frame()
        if frame is not None:
            frame.to_csv(os.path.join(out, f'draws_{fit.model.label}.csv'), index=False)
    write_json(os.path.join(out, 'manifest.json'), run_manifest(
        'analyze', config.seed, config_path, input=config.input_path, counts=counts.to_dict()))

    for model in report.models:
        if model.computed:
            widest = model.intervals[-1]
            click.echo(f"✅ {model.label}: mean {model.mean:.3f}, {widest.level:.0%} interval "
                       f"[{widest.lower:.3f}, {widest.upper:.3f}], P(psi > 0) = {model.prob_positive:.3f}")
        else:
            bf = model.acceptance.bayes_factor if model.acceptance else float('nan')
            click.echo(f"⚠️  {model.label}: not computed (Bayes factor at least {bf:.3g})")
    click.echo(f"📁 Results written to {out}")


@analysis_bp.cli.command('heckman')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Counts or row CSV')
@click.option('--iterations', type=click.IntRange(min=1), default=GibbsConfig.iterations, show_default=True)
@click.option('--burn-in', type=click.IntRange(min=0), default=GibbsConfig.burn_in, show_default=True)
@click.option('--mh-sd', type=float, default=GibbsConfig.mh_sd, show_default=True, help='Rho proposal SD')
@handle_cli_errors
def heckman(input_path, iterations, burn_in, mh_sd):
    """Fit the selection model and export its chain"""
    seed = global_option('seed', current_app.config['DEFAULT_SEED'])
    config = GibbsConfig(iterations=iterations, burn_in=burn_in, mh_sd=mh_sd)
    counts, rows = read_input(input_path)
    if rows is None:
        rows = counts_to_rows(counts)

    current_app.logger.info(f"Fitting selection model to {len(rows)} rows")
    chain = heckman_fit(rows, config, seed)

    out = ensure_output_dir(global_option('output_dir', current_app.config['OUTPUT_DIR']))
    chain.to_frame().to_csv(os.path.join(out, 'chain.csv'), index=False)
    for interval in credible_intervals(chain.psi, parse_levels(current_app.config['CREDIBLE_LEVELS'])):
        click.echo(f"✅ psi {interval.level:.0%} interval [{interval.lower:.3f}, {interval.upper:.3f}]")
    click.echo(f"📈 rho acceptance {chain.rho_acceptance:.3f}, mean rho {chain.rho.mean():.3f}")
    click.echo(f"📁 Chain written to {out}")
