import click
from flask.cli import FlaskGroup

from app import create_app
from app.middleware import SEED, share_global_options


@click.group(cls=FlaskGroup, create_app=create_app, add_default_commands=False)
@click.option('--seed', type=SEED, help='Master seed (default: PIM_SEED)')
@click.option('--draws', type=click.IntRange(min=1), help='Accepted posterior draws per model')
@click.option('--out', 'output_dir', type=click.Path(file_okay=False), help='Output directory')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='Analysis or study INI file')
@click.pass_context
def cli(ctx, seed, draws, output_dir, config_path):
    """Partial identification of a binary-outcome risk difference under nonignorable missingness"""
    share_global_options(ctx, seed=seed, draws=draws, output_dir=output_dir, config_path=config_path)


def main():
    """Main application entry point"""
    cli()


if __name__ == "__main__":
    main()
