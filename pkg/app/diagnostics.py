import os

import click
from flask import Blueprint, current_app

from app.datasets import read_input, read_qtable_csv
from app.evidence import falsifiability_check
from app.identification import assumption_omega_intervals, assumption_psi_bounds
from app.middleware import ASSUMPTION_KINDS, QTABLE_COLUMNS, DataParseError, ensure_output_dir, global_option, \
    handle_cli_errors, write_json
from app.models import CELLS, AssumptionSpec, ZMarginParam
from app.saturated import psi_bounds

diagnostics_bp = Blueprint('diagnostics', __name__, cli_group=None)


def _observed_params(path):
    """Point estimates from a counts/rows CSV, or the q-table itself"""
    with open(path, encoding='utf-8') as handle:
        header = [c.strip() for c in handle.readline().strip().split(',')]
    if header == QTABLE_COLUMNS:
        return read_qtable_csv(path), None
    counts, _ = read_input(path)
    try:
        q = counts.observed_params()
    except ValueError as e:
        raise DataParseError(f"Cannot estimate cell probabilities: {e}") from e
    zshare = counts.zcounts[1] / counts.n if counts.n else 0.5
    return q, zshare


@diagnostics_bp.cli.command('bounds')
@click.option('--input', 'input_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Counts, rows or q-table CSV')
@click.option('--kind', type=click.Choice(ASSUMPTION_KINDS), default='None', show_default=True)
@click.option('--t-l', type=float, default=AssumptionSpec.t_l, show_default=True)
@click.option('--t-h', type=float, default=AssumptionSpec.t_h, show_default=True)
@click.option('--qz', type=click.FloatRange(0.0, 1.0), help='P(Z=1); defaults to the sample share, or 0.5')
@handle_cli_errors
def bounds(input_path, kind, t_l, t_h, qz):
    """Print per-cell omega intervals, psi bounds and falsifiability flags (bounds.json with --out)"""
    spec = AssumptionSpec(kind, t_l=t_l, t_h=t_h)
    q, zshare = _observed_params(input_path)
    margin = ZMarginParam(qz if qz is not None else (zshare if zshare is not None else 0.5))
    current_app.logger.info(f"Bounds for {input_path} under {kind}")

    intervals = assumption_omega_intervals(q, spec)
    nonparametric = psi_bounds(q, margin)
    restricted = assumption_psi_bounds(q, margin, spec)
    flags = falsifiability_check(q, t_l, t_h)

    click.echo(f"📊 omega intervals under {kind}:")
    for cell, interval in zip(CELLS, intervals):
        click.echo(f"   omega_{cell.label}: {interval}")
    click.echo(f"📏 psi bounds (no assumptions): [{nonparametric[0]:.4f}, {nonparametric[1]:.4f}]")
    if restricted is None:
        click.echo(f"⚠️  psi bounds ({kind}): Infeasible")
    else:
        click.echo(f"📏 psi bounds ({kind}): [{restricted[0]:.4f}, {restricted[1]:.4f}]")
    for name, compatible in flags.items():
        click.echo(f"{'✅' if compatible else '❌'} {name}: {'compatible' if compatible else 'falsified'}")

    output_dir = global_option('output_dir')
    if output_dir:
        out = ensure_output_dir(output_dir)
        write_json(os.path.join(out, 'bounds.json'), {
            'kind': kind,
            'qz': margin.qz,
            'omega': {cell.label: interval.to_dict() for cell, interval in zip(CELLS, intervals)},
            'psi_bounds': list(nonparametric),
            'assumption_psi_bounds': list(restricted) if restricted is not None else None,
            'falsifiability': flags,
        })
        click.echo(f"📁 Bounds written to {out}")
