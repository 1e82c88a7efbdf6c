"""Main entry point for the collective emission toolkit."""

import logging
import sys
from functools import wraps
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

import click
from rich.console import Console
from rich.table import Table

from config.settings import settings
from core.model import ModelValidationError, validate
from core.quadrature import DomainError, QuadratureError
from formats.config_loader import ConfigError, RunConfig, load_run_config
from formats.series_io import SeriesFormatError, emit, to_json
from pipeline import CompareStep, ContinuumStep, KernelStep, PolesStep, SolveStep
from solvers.continuum import SamplingError
from solvers.direct_solver import SolverError
from solvers.evolution import EvolutionError
from solvers.spectral import BranchMatchingError, SpectralConvergenceError
from utils.logger import configure_library_logging
from utils.progress import StateManager

console = Console(stderr=True)

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_SPECTRAL = 4

EXIT_CODES = (
    ((ConfigError, ModelValidationError, SeriesFormatError), EXIT_USAGE),
    ((QuadratureError, DomainError, SolverError, EvolutionError, SamplingError), EXIT_SOLVER),
    ((BranchMatchingError, SpectralConvergenceError), EXIT_SPECTRAL),
)


def exit_code_for(error: Exception) -> int:
    """Exit code of the stable contract, 1 for anything outside it."""
    for classes, code in EXIT_CODES:
        if isinstance(error, classes):
            return code
    if isinstance(error, ValueError):
        return EXIT_USAGE
    return 1


def handle_errors(func):
    """Report known failures on stderr and exit with their code."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.exceptions.ClickException:
            raise
        except Exception as e:
            code = exit_code_for(e)
            if code == 1:
                raise
            console.print(f"[red]error ({type(e).__name__}):[/red] {e}", markup=True, highlight=False)
            trajectory = getattr(e, "trajectory", None)
            if trajectory:
                console.print(f"  Newton trajectory: {', '.join(f'{z:.6g}' for z in trajectory[-5:])}")
            sys.exit(code)
    return wrapper


class Context:
    """Global options shared by the subcommands."""

    def __init__(self, config_path, out, threads, rel_tol, nondimensional, log_to_file, progress):
        self.config_path = config_path
        self.out = out
        self.threads = threads
        self.rel_tol = rel_tol
        self.nondimensional = nondimensional
        self.log_to_file = log_to_file
        self.progress = progress

    def config(self) -> RunConfig:
        if self.config_path is None:
            raise click.UsageError("--config is required for this command")
        config = load_run_config(self.config_path)
        return config.nondimensional() if self.nondimensional else config

    def output(self, config: RunConfig = None):
        if self.out is not None:
            return self.out
        return config.output if config is not None else None


pass_context = click.make_pass_decorator(Context)


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="JSON problem instance")
@click.option("--out", type=click.Path(path_type=Path), help="Output file (standard output otherwise)")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker cap (THREADS by default)")
@click.option("--rel-tol", type=float, default=None, help="Quadrature relative tolerance")
@click.option("--nondimensional", is_flag=True, help="Rescale the instance to c = Ω = 1")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    help="Level of the library loggers on stderr",
)
@click.option("--log-file/--no-log-file", default=True, help="Write dated step logs under LOGS_DIR")
@click.option("--progress/--no-progress", default=True, help="Show progress bars on stderr")
@click.pass_context
def cli(ctx, config_path, out, threads, rel_tol, nondimensional, log_level, log_file, progress):
    """Single-excitation dynamics of N two-level atoms."""
    configure_library_logging(getattr(logging, log_level.upper()))
    ctx.obj = Context(
        config_path=config_path,
        out=out,
        threads=threads or settings.threads,
        rel_tol=rel_tol,
        nondimensional=nondimensional,
        log_to_file=log_file,
        progress=progress,
    )


@cli.command()
@click.option("--u", "u_values", type=float, multiple=True, help="Lag u; repeat for several")
@pass_context
@handle_errors
def kernel(obj: Context, u_values):
    """Tabulate the memory kernel K_jl(u) as CSV."""
    if not u_values:
        raise click.UsageError("at least one --u value is required")
    config = obj.config()
    step = KernelStep(config, spec=config.quadrature_spec(obj.rel_tol), log_to_file=obj.log_to_file)
    emit(step.render(step.run(u_values)), obj.output(config))


@cli.command()
@click.option("--method", type=click.Choice(["direct", "contour", "asymptotic"]), default="direct")
@click.option("--horizon", type=float, default=None, help="Last output time")
@click.option("--step", type=float, default=None, help="Grid step")
@click.option("--t0", type=float, default=None, help="First output time")
@click.option("--tail", type=click.Choice(["lead", "improved", "none"]), default="improved",
              help="Algebraic tail of the asymptotic method")
@click.option("--breakdown", is_flag=True, help="Add one column pair per term")
@pass_context
@handle_errors
def solve(obj: Context, method, horizon, step, t0, tail, breakdown):
    """Amplitudes β(t) as CSV."""
    config = obj.config()
    runner = SolveStep(
        config,
        spec=config.quadrature_spec(obj.rel_tol),
        threads=obj.threads,
        show_progress=obj.progress,
        log_to_file=obj.log_to_file,
    )
    series = runner.run(method=method, horizon=horizon, step=step, t0=t0, tail=tail)
    emit(runner.render(series, breakdown=breakdown), obj.output(config))


@cli.command()
@pass_context
@handle_errors
def poles(obj: Context):
    """Oscillatory and resonance poles as JSON."""
    config = obj.config()
    step = PolesStep(config, spec=config.quadrature_spec(obj.rel_tol), threads=obj.threads,
                     log_to_file=obj.log_to_file)
    emit(step.render(step.run()), obj.output(config))


@cli.command()
@click.argument("file_a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("file_b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@pass_context
@handle_errors
def compare(obj: Context, file_a, file_b):
    """Error report between two series CSV files as JSON."""
    step = CompareStep(log_to_file=obj.log_to_file)
    emit(step.render(step.run(file_a, file_b)), obj.output())


@cli.command()
@click.option("--resume", is_flag=True, help="Skip N values recorded by an earlier run")
@pass_context
@handle_errors
def continuum(obj: Context, resume):
    """Finite-N sequence towards the continuum limit as JSON."""
    config = obj.config()
    step = ContinuumStep(
        config,
        spec=config.quadrature_spec(obj.rel_tol),
        threads=obj.threads,
        show_progress=obj.progress,
        log_to_file=obj.log_to_file,
    )
    emit(step.render(step.run(resume=resume)), obj.output(config))


@cli.command(name="validate")
@pass_context
@handle_errors
def validate_command(obj: Context):
    """Model invariants and derived constants as JSON."""
    config = obj.config()
    emit(to_json(validate(config.params, config.initial).to_dict()), obj.output(config))


@cli.command()
def status():
    """Show the state of resumable continuum runs."""
    table = Table(title="Continuum runs")
    table.add_column("Run", style="cyan")
    table.add_column("Status", style="green")
    table.add_column("Progress", style="yellow")
    table.add_column("Failed", style="red")

    state_files = sorted(settings.paths.state_dir.glob("continuum_*_progress.json"))
    if not state_files:
        console.print("No continuum runs recorded")
        return

    for path in state_files:
        run_name = path.name[: -len("_progress.json")]
        state = StateManager(run_name, settings.paths.state_dir)
        state.load()
        processed = len(state.finished())
        failed = state.failed()
        total = state.total
        status_text = "Completed" if processed >= total and total > 0 else "In progress"
        failed_text = ", ".join(f"N={key}" for key in failed) or "-"
        table.add_row(run_name, status_text, f"{processed}/{total}", failed_text)

    console.print(table)


if __name__ == "__main__":
    cli()
