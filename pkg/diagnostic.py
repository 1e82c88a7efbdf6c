"""
Diagnostic script to cross-check the evaluators on the shipped instances
before long runs.

The default audit compares the direct, contour and pole evaluators on the
small-coupling instances. The slower audits (tail fit, oscillatory regime,
continuum sequence, pole-search scaling) are opt-in.
"""

import math
import sys
import time
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent))

from config.settings import settings
from core.kernels import memory_kernel
from core.model import ModelParams, distances, validate
from formats.config_loader import load_run_config
from solvers.continuum import ContinuumRun, continuum_observables, sample_atoms
from solvers.direct_solver import TimeGrid, solve_volterra
from solvers.evolution import (
    TailVariant,
    compare,
    compute_spectral_data,
    crossover_time,
    evolve_asymptotic,
    evolve_contour,
)

console = Console(stderr=True)

SMALL_INSTANCES = ("n1_small", "n2_small", "n3_small")
AUDITS = ("agreement", "tail", "oscillatory", "continuum", "scaling")


def load(name: str):
    path = settings.paths.instances_dir / f"{name}.json"
    config = load_run_config(path)
    report = validate(config.params, config.initial)
    if not report.passed:
        raise ValueError(f"{name}: {'; '.join(report.failures())}")
    return config


def audit_agreement(name: str) -> tuple[bool, str]:
    """Kernel at zero lag, residue sum, direct vs contour vs pole approximation."""
    config = load(name)
    params, initial = config.params, config.initial
    norm0 = float(np.linalg.norm(initial.beta0))

    d = distances(params)
    kernel_error = max(
        abs(memory_kernel(0.0, float(r), params) - math.pi ** 1.5 * math.exp(-r * r / 4.0))
        / (math.pi ** 1.5 * math.exp(-r * r / 4.0))
        for r in d.unique
    )

    spectral = compute_spectral_data(params)
    residue_sum = sum(pole.residue for pole in spectral.resonance + spectral.oscillatory)
    residue_error = float(np.abs(residue_sum - np.eye(params.n_atoms)).max())

    horizon = config.grid.horizon or 20.0 / params.omega
    grid = TimeGrid.covering(horizon, config.grid.step or 0.01)
    direct = solve_volterra(params, initial, grid)
    contour = evolve_contour(params, initial, grid, spectral=spectral)
    agreement = compare(direct, contour)
    shadow = float(np.linalg.norm(direct.values, axis=1).max())

    rate = max(pole.decay_rate for pole in spectral.resonance)
    late_end = min(horizon, 5.0 / rate)
    late = TimeGrid.covering(late_end, grid.step, start=2.0 / params.omega)
    poles_only = evolve_asymptotic(params, initial, late, tail=TailVariant.NONE, spectral=spectral)
    pole_error = compare(direct, poles_only).max_abs

    passed = (
        kernel_error < 1e-8
        and residue_error < 1e-2
        and agreement.max_abs <= 1e-3 * norm0
        and shadow <= norm0 * (1.0 + 1e-6)
        and pole_error <= 0.05 * norm0
    )
    detail = (
        f"K(0) {kernel_error:.1e}, ΣS-I {residue_error:.1e}, direct-contour {agreement.max_abs:.1e}, "
        f"max‖β‖ {shadow:.6f}, pole approx {pole_error:.1e}"
    )
    return passed, detail


def audit_tail(g: float) -> tuple[bool, str]:
    """Fit the t⁻³ remainder beyond the crossover on a single atom."""
    config = load("n1_small")
    params = config.params.with_coupling(g)
    spectral = compute_spectral_data(params)
    t_star = crossover_time(spectral, config.initial)
    if t_star is None:
        return False, "no crossover time"

    grid = TimeGrid.covering(3.0 * t_star, 2.0 * t_star / 64, start=t_star)
    exact = evolve_contour(params, config.initial, grid, spectral=spectral)
    poles_only = evolve_asymptotic(params, config.initial, grid, tail=TailVariant.NONE, spectral=spectral)
    remainder = np.linalg.norm(exact.values - poles_only.values, axis=1)
    t = exact.times

    slope, _ = np.polyfit(np.log(t), np.log(remainder), 1)
    fitted = float(np.mean(remainder * t ** 3))
    beta0 = np.asarray(config.initial.beta0, dtype=complex)
    improved = float(np.linalg.norm(spectral.tail_improved @ beta0))
    headline = float(np.linalg.norm(spectral.tail_headline @ beta0))
    matched = "full" if abs(fitted / improved - 1.0) <= 0.25 else (
        "half" if abs(fitted / headline - 1.0) <= 0.25 else "neither"
    )
    passed = abs(slope + 3.0) <= 0.15 and matched == "full"
    return passed, f"t*={t_star:.4g}, slope {slope:.3f}, C {fitted:.3e} vs |Tβ0| {improved:.3e} (matches {matched})"


def audit_oscillatory() -> tuple[bool, str]:
    """Strong coupling keeps a non-decaying part of size ‖R β0‖."""
    config = load("n1_strong")
    params, initial = config.params, config.initial
    spectral = compute_spectral_data(params)
    if len(spectral.oscillatory) != 1:
        return False, f"{len(spectral.oscillatory)} oscillatory poles"

    pole = spectral.oscillatory[0]
    predicted = float(np.linalg.norm(pole.residue @ np.asarray(initial.beta0, dtype=complex)))
    trace = float(np.trace(pole.residue).real)
    horizon = config.grid.horizon or 100.0 / params.omega
    direct = solve_volterra(params, initial, TimeGrid.covering(horizon, config.grid.step or 0.05))
    window = direct.times >= 0.5 * horizon
    floor = float(np.linalg.norm(direct.values[window], axis=1).min())
    passed = 0.0 < trace < 1.0 and floor >= 0.5 * predicted
    return passed, f"p={pole.location.real:.6g}, tr R {trace:.4f}, inf‖β‖ {floor:.4f} vs ‖Rβ0‖ {predicted:.4f}"


def audit_continuum() -> tuple[bool, str]:
    """Successive differences of m(t) shrink along the shipped N sequence."""
    config = load("continuum_ball")
    setup = config.continuum
    run = ContinuumRun(
        g_tilde=setup.g_tilde, n_list=setup.n_list, seed=setup.seed,
        density=setup.density, horizon=setup.horizon, samples=setup.samples,
    )
    for n in run.n_list:
        run.records[n] = continuum_observables(
            setup.g_tilde, setup.density, n, setup.seed, setup.horizon,
            base=config.params, samples=setup.samples,
        )
    below_axis = all(z.imag < 0 for record in run.records.values() for z in record.resonance)
    largest = [float(diff.max()) for diff in run.successive_differences()]
    passed = run.differences_decreasing() and below_axis
    return passed, f"max |m_N - m_2N| {', '.join(f'{x:.2e}' for x in largest)}, all Im z < 0: {below_axis}"


def audit_scaling(sizes=(8, 16, 32)) -> tuple[bool, str]:
    """Wall clock of the pole search against N on random ball configurations."""
    base = load("continuum_ball")
    seconds = []
    for n in sizes:
        positions = sample_atoms(base.continuum.density, n, seed=n)
        params = ModelParams(
            g=base.continuum.g_tilde / math.sqrt(n), R=base.params.R, c=base.params.c,
            omega=base.params.omega, positions=positions,
        )
        started = time.perf_counter()
        compute_spectral_data(params)
        seconds.append(time.perf_counter() - started)
    slope, _ = np.polyfit(np.log(sizes), np.log(seconds), 1)
    timings = ", ".join(f"N={n}: {s:.1f}s" for n, s in zip(sizes, seconds))
    return slope <= 4.5, f"{timings}; log-log slope {slope:.2f}"


@click.command()
@click.option("--audit", "audits", multiple=True, type=click.Choice(AUDITS), help="Audits to run (default: agreement)")
@click.option("--tail-g", type=float, default=1.0, show_default=True, help="Coupling for the tail fit")
def main(audits, tail_g):
    """Cross-check the evaluators on the shipped instances."""
    audits = audits or ("agreement",)
    checks = []
    if "agreement" in audits:
        checks += [(f"agreement {name}", lambda name=name: audit_agreement(name)) for name in SMALL_INSTANCES]
    if "tail" in audits:
        checks.append(("tail fit", lambda: audit_tail(tail_g)))
    if "oscillatory" in audits:
        checks.append(("oscillatory regime", audit_oscillatory))
    if "continuum" in audits:
        checks.append(("continuum sequence", audit_continuum))
    if "scaling" in audits:
        checks.append(("pole search scaling", audit_scaling))

    table = Table(title="Diagnostic audits")
    table.add_column("Audit", style="cyan")
    table.add_column("Result")
    table.add_column("Seconds", justify="right")
    table.add_column("Details")

    all_passed = True
    for label, check in checks:
        console.print(f"Running {label}...")
        started = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        all_passed &= passed
        table.add_row(
            label,
            "[green]OK[/green]" if passed else "[red]FAILED[/red]",
            f"{time.perf_counter() - started:.1f}",
            detail,
        )

    console.print(table)
    sys.exit(0 if all_passed else 1)


if __name__ == "__main__":
    main()
