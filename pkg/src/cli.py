"""
Command-line front end.

    python src/cli.py evolve --method nm --method markov --initial excited --out data/evolve.csv
    python src/cli.py rates --method nm --method markov
    python src/cli.py entanglement-proxies --method nm
    python src/cli.py validate --out reports/validation.json

Exit codes: 0 ok, 1 failed validation or table audit, 2 usage or configuration error.
"""
import functools
import logging
import sys
from pathlib import Path

import click

# Fix import path for standalone execution
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.data_pipeline import build_dataset
from src.data_validation import AuditFailed
from src.export_report import export_csv, export_report
from src.qubit_config import INITIAL_STATES, METHODS
from src.run_config import RunConfig
from src.validation_suite import run_validation

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def run_options(command):
    """Options shared by every subcommand; each maps onto a RunConfig key."""
    options = [
        click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
                     help='TOML file with run settings; flags override it.'),
        click.option('--out', type=click.Path(dir_okay=False), help='Output file (default: stdout).'),
        click.option('--method', multiple=True, type=click.Choice(METHODS), help='Engine(s) to run; repeatable.'),
        click.option('--x', type=float, help='Boltzmann factor exp(-beta*omega0).'),
        click.option('--beta-omega0', type=float, help='beta*omega0 (alternative to --x).'),
        click.option('--gamma0-over-omega0', type=float, help='Zero-temperature decay rate in units of omega0.'),
        click.option('--tmax', type=float, help='Final time in units of 1/gamma0.'),
        click.option('--dt', type=float, help='Grid step in units of 1/gamma0.'),
        click.option('--initial', type=click.Choice(INITIAL_STATES), help='Initial qubit state.'),
        click.option('--rho11', type=float, help='Excited population of a custom initial state.'),
        click.option('--rho10-re', type=float, help='Real part of the custom coherence.'),
        click.option('--rho10-im', type=float, help='Imaginary part of the custom coherence.'),
        click.option('--fidelity-initial', type=click.Choice(INITIAL_STATES), help='Initial state for the fidelity.'),
        click.option('--entropy-initial', type=click.Choice(INITIAL_STATES), help='Initial state for the entropy.'),
        click.option('--n-modes', type=int, help='Bath modes of the discrete engines (odd).'),
        click.option('--band', type=float, help='Bath band width in units of omega0.'),
        click.option('--mmax', type=int, help='Photon cutoff of the thermal ensemble.'),
        click.option('--step', type=float, help='RK4 step of the functional engine (absolute time).'),
        click.option('--thermal-window', type=float,
                     help='Thermally populate only modes within this many gamma0 of omega0.'),
        click.option('--n-jobs', type=int, help='Parallel workers for the exact oracle.'),
        click.option('--checkpoint-dir', type=click.Path(file_okay=False), help='Cache for sector eigendecompositions.'),
        click.option('--absolute-time/--no-absolute-time', default=None, help='Add an absolute time column.'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def resolve_config(config_file, overrides):
    """File (or defaults) with the flags applied; configuration errors become usage errors."""
    try:
        base = RunConfig.load(config_file) if config_file else RunConfig()
        return base.merged(overrides).validate()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def dataset_command(name):
    def decorator(func):
        @functools.wraps(func)
        def wrapper(config_file, out, **overrides):
            config = resolve_config(config_file, overrides)
            try:
                df = build_dataset(config, name)
            except AuditFailed as exc:
                logger.error(f"{name} table not written: {exc}")
                click.get_current_context().exit(1)
            except ValueError as exc:
                logger.error(f"{name} failed: {exc}")
                raise click.UsageError(str(exc)) from None
            text, path = export_csv(df, config, out)
            if path is None:
                click.echo(text, nl=False)
        return wrapper
    return decorator


@click.group()
@click.option('--verbose', 'level', flag_value=logging.DEBUG, help='Debug logging.')
@click.option('--quiet', 'level', flag_value=logging.WARNING, help='Warnings and errors only.')
def main(level):
    """Qubit dynamics in a thermal multimode bath: closed forms and exact engines."""
    logging.basicConfig(level=level or logging.INFO, format=LOG_FORMAT, force=True)


@main.command()
@run_options
@dataset_command('evolve')
def evolve():
    """Reduced density matrix over time, one row per (t, method)."""


@main.command()
@run_options
@dataset_command('rates')
def rates():
    """Decoherence and relaxation rates and their ratio."""


@main.command('entanglement-proxies')
@run_options
@dataset_command('entanglement-proxies')
def entanglement_proxies():
    """Fidelity against free evolution and von Neumann entropy."""


@main.command()
@run_options
@click.pass_context
def validate(ctx, config_file, out, **overrides):
    """Runs the acceptance checks and writes a JSON report."""
    config = resolve_config(config_file, overrides)
    try:
        report = run_validation(config)
    except ValueError as exc:
        logger.error(f"validate failed: {exc}")
        raise click.UsageError(str(exc)) from None
    text, path = export_report(report, out)
    if path is None:
        click.echo(text, nl=False)
    failed = [c['name'] for c in report['checks'] if c['gating'] and not c['pass']]
    if failed:
        logger.error(f"Failed checks: {', '.join(failed)}")
        ctx.exit(1)
    logger.info("All gating checks passed")


if __name__ == "__main__":
    main()
