import os
from dataclasses import replace

import click
from flask import Blueprint, current_app

from app.middleware import (
    ASSUMPTION_KINDS,
    ensure_output_dir,
    global_option,
    handle_cli_errors,
    run_manifest,
    write_json,
)
from app.models import AssumptionSpec, DirichletHyper
from app.settings import read_study_config
from app.simulation import posterior_ar_sweep, prior_ar_sweep, run_study

studies_bp = Blueprint('studies', __name__, cli_group=None)

FULL_REPLICATES = 200
RESTRICTED_KINDS = [k for k in ASSUMPTION_KINDS if k != 'None']


@studies_bp.cli.command('simulate')
@click.option('--full', is_flag=True, help=f'Run {FULL_REPLICATES} replicates')
@click.option('--replicates', type=click.IntRange(min=1), help='Override the replicate count')
@click.option('--jobs', type=int, help='Parallel workers (joblib n_jobs)')
@handle_cli_errors
def simulate(full, replicates, jobs):
    """Run a replicated simulation study (study INI given with --config)"""
    config_path = global_option('config_path')
    if not config_path:
        raise click.UsageError('simulate needs a study INI file (--config)')
    defaults = {
        'seed': current_app.config['DEFAULT_SEED'],
        'draws': current_app.config['DEFAULT_DRAWS'],
        'level': current_app.config['SIMULATION_LEVEL'],
    }
    study = read_study_config(config_path, defaults)
    if full:
        study = replace(study, replicates=FULL_REPLICATES)
    overrides = {k: v for k, v in (('replicates', replicates), ('seed', global_option('seed')),
                                   ('draws', global_option('draws'))) if v is not None}
    study = replace(study, **overrides)

    current_app.logger.info(
        f"Simulating {study.dgp.kind} (missing {study.dgp.target_missing}) x {study.replicates} replicates")
    result = run_study(
        study.dgp, study.models, study.replicates, study.seed,
        draws=study.draws,
        level=study.level,
        n_jobs=jobs if jobs is not None else current_app.config['N_JOBS'],
        prior_attempts=current_app.config['PRIOR_ATTEMPTS'],
        bf_fail_threshold=current_app.config['BF_FAIL_THRESHOLD'],
        batch_size=current_app.config['BATCH_SIZE'],
    )

    out = ensure_output_dir(global_option('output_dir', current_app.config['OUTPUT_DIR']))
    result.table.to_csv(os.path.join(out, 'results.csv'), index=False)
    result.replicate_frame().to_csv(os.path.join(out, 'replicates.csv'), index=False)
    write_json(os.path.join(out, 'manifest.json'), run_manifest(
        'simulate', study.seed, config_path, replicates=study.replicates, draws=study.draws,
        level=study.level, dgp=study.dgp.to_dict()))

    for row in result.table.itertuples():
        click.echo(f"✅ {row.model}: coverage {row.coverage:.2f}, width {row.width:.3f}, "
                   f"computed {row.computed:.2f}, AR {row.ar:.3f}, BF {row.bf_geomean:.3g}")
    click.echo(f"📁 Results written to {out}")


@studies_bp.cli.command('prior-ar')
@click.option('--kind', 'kinds', multiple=True, type=click.Choice(RESTRICTED_KINDS),
              help='Assumption kinds (default: all five)')
@click.option('--attempts', type=click.IntRange(min=10_000), help='Prior proposals per rate')
@click.option('--alpha3', 'alpha3_grid', multiple=True, type=float, help='alpha3 values to sweep')
@click.option('--t-l', type=float, default=AssumptionSpec.t_l, show_default=True)
@click.option('--t-h', type=float, default=AssumptionSpec.t_h, show_default=True)
@click.option('--sigma', type=float, default=AssumptionSpec.sigma, show_default=True)
@click.option('--a', 'shape_a', type=float, default=AssumptionSpec.a, show_default=True)
@click.option('--b', 'shape_b', type=float, default=AssumptionSpec.b, show_default=True)
@click.option('--posterior-sweep', is_flag=True, help='Posterior rates on simulated data across missingness')
@click.option('--missing', 'missing_grid', multiple=True, type=float, help='Missingness grid for the posterior sweep')
@click.option('--n', 'sample_size', type=click.IntRange(min=1), default=1000, show_default=True)
@handle_cli_errors
def prior_ar(kinds, attempts, alpha3_grid, t_l, t_h, sigma, shape_a, shape_b, posterior_sweep, missing_grid,
             sample_size):
    """Acceptance rates of the restricted priors, optionally swept over alpha3"""
    seed = global_option('seed', current_app.config['DEFAULT_SEED'])
    attempts = attempts or current_app.config['PRIOR_ATTEMPTS']
    specs = [
        AssumptionSpec(kind, t_l=t_l, t_h=t_h, sigma=sigma, a=shape_a, b=shape_b, hyper=DirichletHyper())
        for kind in (kinds or RESTRICTED_KINDS)
    ]
    out = ensure_output_dir(global_option('output_dir', current_app.config['OUTPUT_DIR']))

    if posterior_sweep:
        grid = missing_grid or (0.1, 0.2, 0.3, 0.4, 0.5)
        current_app.logger.info(f"Posterior acceptance sweep over missingness {list(grid)}")
        table = posterior_ar_sweep(
            grid, specs, sample_size, seed,
            draws=global_option('draws', current_app.config['DEFAULT_DRAWS']),
            prior_attempts=attempts,
            bf_fail_threshold=current_app.config['BF_FAIL_THRESHOLD'],
            batch_size=current_app.config['BATCH_SIZE'],
        )
        path = os.path.join(out, 'posterior_ar.csv')
    else:
        grid = alpha3_grid or (DirichletHyper.a3,)
        current_app.logger.info(f"Prior acceptance rates for {len(specs)} specs over alpha3 {list(grid)}")
        table = prior_ar_sweep(grid, specs, attempts, seed, batch_size=current_app.config['BATCH_SIZE'])
        path = os.path.join(out, 'prior_ar.csv')

    table.to_csv(path, index=False)
    write_json(os.path.join(out, 'manifest.json'), run_manifest('prior-ar', seed, attempts=attempts))
    for row in table.itertuples():
        click.echo(f"✅ {row.spec}: AR {row.ar:.4f} ± {row.se:.4f}")
    click.echo(f"📁 Rates written to {path}")
