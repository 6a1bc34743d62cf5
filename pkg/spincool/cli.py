"""
spincool CLI - Command-line interface for the spin-postselection cooling experiments
"""

import logging
import sys

import click

from spincool.config import load_config
from spincool.exceptions import (
    ConfigError,
    DomainError,
    NumericalError,
    OutputError,
    SpinCoolError,
)
from spincool.experiments import run_experiment

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


@click.group()
@click.version_option(package_name="spincool")
def cli():
    """
    spincool - Simulate ground-state cooling of a mechanical oscillator by spin postselection.

    Examples:
        spincool fig1 --out results/
        spincool fig3 --set spin_counts=[1,4] --set iterations=8
        spincool optimize --set n_spins=3 --seed 7
        spincool estimate-coupling --set dbdz=1e6
    """
    pass


def experiment_options(func):
    """Options shared by every experiment command."""
    decorators = [
        click.option('--config', 'config_path', type=click.Path(), default=None, help='TOML config file'),
        click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE', help='Override a config key (repeatable)'),
        click.option('--out', default=None, help='Output directory (default: current directory)'),
        click.option('--jobs', type=int, default=None, help='Worker processes for sweeps'),
        click.option('--seed', type=int, default=None, help='Optimizer seed'),
        click.option('--format', 'output_format', type=click.Choice(['csv', 'json']), default=None, help='Table format'),
        click.option('--verbose', '-v', is_flag=True, help='Debug logging and tracebacks'),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def _configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _fail(prefix: str, error: Exception, code: int, verbose: bool):
    click.secho(f"{prefix}: {error}", fg='red', err=True)
    if verbose:
        import traceback
        traceback.print_exc()
    sys.exit(code)


def _run(experiment, config_path, overrides, out, jobs, seed, output_format, verbose):
    _configure_logging(verbose)
    flags = {"out": out, "jobs": jobs, "seed": seed, "output_format": output_format}

    try:
        config = load_config(experiment, config_path, overrides, flags)
    except ConfigError as e:
        _fail("Config Error", e, EXIT_CONFIG, verbose)

    click.echo(f"Running: {experiment}")
    try:
        result = run_experiment(config)
    except DomainError as e:
        _fail("Error", e, EXIT_CONFIG, verbose)
    except NumericalError as e:
        _fail("Numerical Error", e, EXIT_NUMERIC, verbose)
    except SpinCoolError as e:
        _fail("Error", e, EXIT_CONFIG, verbose)

    try:
        paths = result.save(config.out, config.output_format, config.resolved())
    except OutputError as e:
        _fail("IO Error", e, EXIT_IO, verbose)

    for path in paths:
        click.echo(f"  wrote {path}")
    for key, value in result.metadata.items():
        click.echo(f"  {key}: {value}")

    if result.failure is not None:
        _fail("Numerical Error (partial results written)", result.failure, EXIT_NUMERIC, verbose)
    click.secho(f"✓ Success! {experiment} results saved to {config.out}", fg='green')


def _experiment_command(name: str, help_text: str):
    """Register a click command that runs the named experiment."""

    @experiment_options
    def command(**kwargs):
        _run(name, **kwargs)

    command.__doc__ = help_text
    return cli.command(name=name)(command)


_experiment_command("fig1", """
    Single-spin sweep of the one-step phonon ratio over time and coupling.

    Writes fig1_ratio (t,lambda,ratio) and fig1_variance (t,lambda,var_ratio).

    Examples:
        spincool fig1 --out results/ --jobs 4
        spincool fig1 --set t_points=16 --set lambda_points=31
    """)

_experiment_command("fig2", """
    One-step ratio against coupling for several spin counts, plus the N/(N-1) enhancement.

    Examples:
        spincool fig2 --set spin_counts=[1,2,3,4] --set enhancement_max=8
    """)

_experiment_command("fig3", """
    Iterated independent-spin protocol for each spin count (iter,mean_phonon,ratio,dx,dy,p_step,p_cum).

    Examples:
        spincool fig3 --set iterations=10
    """)

_experiment_command("fig6", """
    Independent N=2,3,4 against the correlated two- and three-spin targets.

    Examples:
        spincool fig6 --out results/
    """)

_experiment_command("collective", """
    Collective-basis protocol (default N=50, coupling 0.028, five iterations) with Fock histograms.

    Examples:
        spincool collective --set n_spins=20
    """)

_experiment_command("open", """
    Protocol with spin and mechanical noise integrated by a master equation.

    Examples:
        spincool open --set gamma=1e-3 --set dephasing=1e-2
        spincool open --set n_spins=2 --set strategy=corr2
    """)

_experiment_command("optimize", """
    Search the postselection target minimizing the one-step phonon ratio (JSON output).

    Examples:
        spincool optimize --set n_spins=2 --seed 0
    """)

_experiment_command("estimate-coupling", """
    Dimensionless coupling from field gradient (T/m), mass (kg) and frequency (rad/s).

    Examples:
        spincool estimate-coupling --set dbdz=1e6 --set mass=1e-14 --set omega_m=1e6
    """)


def main():
    """Entry point for the CLI"""
    cli()


if __name__ == '__main__':
    main()
