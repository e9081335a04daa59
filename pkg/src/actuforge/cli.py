"""Command-line entry points.

Exit codes follow the usual solver convention: 0 means an optimal design
was produced, 2 means the problem was proven infeasible (a diagnosis is
printed), and 1 means the inputs themselves were bad.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click

from . import fixtures
from .components import load_library, save_library
from .errors import ActuforgeError
from .optimizer import DesignProblem, DesignRule, Diagnosis, design_from_solution, solve
from .study import (
    SCHEMA_VERSION,
    StudyGrid,
    budget_grid,
    load,
    persist,
    run_grid,
    solution_to_dict,
    study_content_hash,
)
from .tasking import concatenate, load_trajectory, save_trajectory


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _load_inputs(library_path: str, task_paths: tuple[str, ...]):
    try:
        library = load_library(library_path)
        tasks = concatenate([load_trajectory(p) for p in task_paths])
    except (ActuforgeError, OSError) as exc:
        raise _fail(str(exc)) from exc
    return library, tasks


def _parse_budgets(text: str) -> tuple[float, ...]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _fail(f"--budgets wants min:step:max, got {text!r}")
    try:
        lo, step, hi = (float(p) for p in parts)
    except ValueError as exc:
        raise _fail(f"--budgets wants numbers, got {text!r}") from exc
    try:
        return budget_grid(lo, step, hi)
    except ActuforgeError as exc:
        raise _fail(str(exc)) from exc


def _parse_couplings(text: str, library) -> tuple[str, ...]:
    if text.strip() == "all":
        return tuple(c.id for c in library.couplings)
    ids = tuple(t.strip() for t in text.split(",") if t.strip())
    if not ids:
        raise _fail("--couplings wants ids or 'all'")
    return ids


def _render_diagnosis(diag: Diagnosis) -> str:
    lines = [f"infeasible ({diag.kind}): {diag.message}"]
    for a in diag.actuators:
        need = f"needs {a.required_velocity:.1f} rad/s / {a.required_torque:.1f} Nm at N=1"
        if a.min_feasible_mass is not None:
            lines.append(
                f"  actuator {a.actuator_index + 1}: {a.feasible_pairs} feasible pairs, "
                f"lightest {a.min_feasible_mass:.3f} kg ({need})"
            )
        elif a.best_candidate is not None:
            mid, ratio, margin = a.best_candidate
            lines.append(
                f"  actuator {a.actuator_index + 1}: no feasible pair ({need}); "
                f"closest {mid} at N={ratio:g}, margin {margin:.3g}"
            )
        else:
            lines.append(f"  actuator {a.actuator_index + 1}: no feasible pair ({need})")
    if diag.min_feasible_mass is not None:
        lines.append(f"  minimum feasible motor mass: {diag.min_feasible_mass:.3f} kg")
    if diag.suggestion:
        lines.append(f"  suggestion: {diag.suggestion}")
    return "\n".join(lines)


@click.group()
@click.version_option(package_name="actuforge")
def cli():
    """Drivetrain selection and analysis for coupled legged-robot actuation."""


@cli.command("solve")
@click.option("--library", "library_path", required=True, help="library YAML file")
@click.option("--tasks", "task_paths", required=True, multiple=True,
              help="task CSV file (repeatable; tasks are spliced in order)")
@click.option("--coupling", "coupling_id", required=True, help="coupling id from the library")
@click.option("--budget", required=True, type=float, help="total motor mass budget [kg]")
@click.option("--margin", type=float, default=0.0, show_default=True,
              help="shrink every operation domain by this fraction")
@click.option("--out", "out_path", required=True, help="where to write the solution JSON")
def cli_solve(library_path, task_paths, coupling_id, budget, margin, out_path) -> int:
    """Pick motors and gears for one coupling under a mass budget."""
    library, tasks = _load_inputs(library_path, task_paths)
    try:
        problem = DesignProblem(
            library=library,
            tasks=tasks,
            coupling=library.coupling(coupling_id),
            rules=(DesignRule.mass_budget(budget),),
            margin=margin,
        )
        solution = solve(problem)
    except (ActuforgeError, KeyError) as exc:
        raise _fail(str(exc)) from exc

    if not solution.optimal:
        click.echo(_render_diagnosis(solution.diagnosis))
        return 2

    payload = {"schema_version": SCHEMA_VERSION, "solution": solution_to_dict(solution)}
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    design = design_from_solution(library, solution)
    click.echo(design.describe())
    click.echo(f"trace {solution.trace:.6e} kg m^2, mass {solution.total_motor_mass:.3f} kg")
    click.echo(f"wrote {out}")
    return 0


@cli.command("study")
@click.option("--library", "library_path", required=True, help="library YAML file")
@click.option("--tasks", "task_paths", required=True, multiple=True,
              help="task CSV file (repeatable)")
@click.option("--budgets", "budget_spec", required=True, help="grid as min:step:max [kg]")
@click.option("--couplings", "coupling_spec", required=True,
              help="comma-separated coupling ids, or 'all'")
@click.option("--margin", type=float, default=0.0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="worker threads")
@click.option("--force", is_flag=True, help="overwrite an existing study directory")
@click.option("--out", "out_dir", required=True, help="study directory to create")
def cli_study(library_path, task_paths, budget_spec, coupling_spec, margin, jobs,
              force, out_dir) -> int:
    """Run the full (budgets x couplings) grid and persist it."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise _fail(f"{out} already holds a study; pass --force to overwrite")
    library, tasks = _load_inputs(library_path, task_paths)
    budgets = _parse_budgets(budget_spec)
    coupling_ids = _parse_couplings(coupling_spec, library)
    try:
        grid = StudyGrid(library=library, tasks=tasks, budgets=budgets,
                         coupling_ids=coupling_ids, margin=margin)
    except (ActuforgeError, KeyError) as exc:
        raise _fail(str(exc)) from exc

    total = len(budgets) * len(coupling_ids)

    def progress(done, _total):
        if done == total or done % 25 == 0:
            click.echo(f"  {done}/{total} cells", err=True)

    t0 = time.perf_counter()
    try:
        result = run_grid(grid, parallelism=jobs, progress=progress)
        persist(result, out, force=force)
    except ActuforgeError as exc:
        raise _fail(str(exc)) from exc
    elapsed = time.perf_counter() - t0

    for cid in coupling_ids:
        cells = result.coupling_cells(cid)
        feasible = sum(1 for c in cells if c.analysis is not None)
        click.echo(f"  {cid:<12s} {feasible}/{len(cells)} budgets feasible")
    click.echo(f"{total} cells in {elapsed:.1f} s -> {out}")
    click.echo(f"content hash {study_content_hash(out)}")
    return 0


@cli.command("report")
@click.argument("study_dir")
@click.option("--out", "out_dir", default=None,
              help="figure directory (default: the study directory itself)")
@click.option("--cell", "cell_spec", default=None,
              help="also render motor-domain panels for one cell, as BUDGET:COUPLING")
def cli_report(study_dir, out_dir, cell_spec) -> int:
    """Render figures for a persisted study, next to its summary tables."""
    from . import plots   # matplotlib import is slow; keep it off the solve path

    try:
        result = load(study_dir)
    except (ActuforgeError, OSError) as exc:
        raise _fail(str(exc)) from exc
    out = Path(out_dir) if out_dir else Path(study_dir)
    written = plots.render_study_figures(result, out)

    if cell_spec:
        try:
            budget_text, _, coupling_id = cell_spec.partition(":")
            cell = result.cell(float(budget_text), coupling_id)
        except (ValueError, KeyError) as exc:
            raise _fail(f"--cell wants BUDGET:COUPLING of an existing cell: {exc}") from exc
        if cell.solution is None or not cell.solution.optimal:
            raise _fail(f"cell {cell_spec} has no optimal design to draw")
        design = design_from_solution(result.grid.library, cell.solution)
        target = out / f"domains_{budget_text}_{coupling_id}.png"
        written.append(plots.plot_operation_domains(design, result.grid.library,
                                                    result.grid.tasks, target))

    for path in written:
        click.echo(f"wrote {path}")
    return 0


@cli.command("serve")
@click.option("--port", envvar="ACTUFORGE_PORT", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", envvar="ACTUFORGE_DATA_DIR", default="actuforge-data",
              show_default=True)
@click.option("--jobs", envvar="ACTUFORGE_JOBS", type=int, default=1, show_default=True,
              help="concurrent study jobs")
def cli_serve(port, host, data_dir, jobs) -> int:
    """Run the HTTP service."""
    import uvicorn

    from .server import create_app

    app = create_app(data_dir=Path(data_dir), jobs=jobs)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


@cli.command("fixtures")
@click.option("--out", "out_dir", default=".", show_default=True)
def cli_fixtures(out_dir) -> int:
    """Write the built-in reference library and task files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_library(fixtures.reference_library(), out / "library.yaml")
    save_trajectory(fixtures.walking_task(), out / "walking.csv")
    save_trajectory(fixtures.snatch_task(), out / "snatch.csv")
    click.echo(f"wrote {out / 'library.yaml'}, {out / 'walking.csv'}, {out / 'snatch.csv'}")
    click.echo("grid used throughout the docs: --budgets 2.2:0.075:4.0 --couplings all")
    return 0


def main(argv=None) -> int:
    """Console entry point with the documented exit-code mapping."""
    try:
        rv = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        return 130
    except click.ClickException as exc:
        exc.show()
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
