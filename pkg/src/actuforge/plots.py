"""Figure rendering for studies and solved designs.

Every helper writes a PNG and returns the path; nothing opens a window.
The study-level figures (trace curves, copper curves, Pareto scatter,
feasibility map) take a StudyResult, the design-level one takes a Design
plus the task trajectory, so they can be driven from the CLI or a script.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap
from matplotlib.lines import Line2D

from .study import StudyResult
from .tasking import Trajectory
from .transmission import Design, check_feasibility, effective_motor_torques

FIGURE_DPI = 150

_INFEASIBLE = float("nan")


def _coupling_colors(coupling_ids):
    cmap = plt.get_cmap("tab10")
    return {cid: cmap(i % 10) for i, cid in enumerate(coupling_ids)}


def _trace_series(result: StudyResult, coupling_id: str):
    ys = []
    for cell in result.coupling_cells(coupling_id):
        if cell.analysis is not None:
            ys.append(cell.analysis.trace)
        else:
            ys.append(_INFEASIBLE)
    return np.asarray(ys)


def plot_trace_curves(result: StudyResult, path) -> Path:
    """Per-coupling trace-vs-budget curves; infeasible cells leave gaps."""
    path = Path(path)
    colors = _coupling_colors(result.grid.coupling_ids)
    budgets = np.asarray(result.grid.budgets)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for cid in result.grid.coupling_ids:
        ys = _trace_series(result, cid)
        if np.all(np.isnan(ys)):
            continue
        ax.plot(budgets, ys * 1e3, marker=".", markersize=4, lw=1.2,
                color=colors[cid], label=cid)
    ax.set_xlabel("mass budget [kg]")
    ax.set_ylabel(r"trace of joint reflected inertia [$10^{-3}\,$kg$\,$m$^2$]")
    ax.set_title("optimal cost vs. mass budget")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_copper_curves(result: StudyResult, path) -> Path:
    """Copper energy per task vs. budget, one panel per task segment."""
    path = Path(path)
    colors = _coupling_colors(result.grid.coupling_ids)
    budgets = np.asarray(result.grid.budgets)
    task_names = [seg.name for seg in result.grid.tasks.segments]
    n = max(len(task_names), 1)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 4.0), squeeze=False)
    for j, name in enumerate(task_names):
        ax = axes[0][j]
        for cid in result.grid.coupling_ids:
            ys = []
            for cell in result.coupling_cells(cid):
                if cell.analysis is None:
                    ys.append(_INFEASIBLE)
                    continue
                per = dict(cell.analysis.copper_per_task)
                ys.append(per.get(name, _INFEASIBLE))
            ys = np.asarray(ys)
            if np.all(np.isnan(ys)):
                continue
            ax.plot(budgets, ys, marker=".", markersize=4, lw=1.2,
                    color=colors[cid], label=cid)
        ax.set_xlabel("mass budget [kg]")
        ax.set_ylabel("copper energy [J]")
        ax.set_title(name)
        ax.grid(True, alpha=0.3)
        if j == 0:
            ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_pareto(result: StudyResult, path) -> Path:
    """Pairwise projections of the (mass, trace, copper) cloud.

    Front members get larger, edged markers; dominated cells stay small
    and faded so the front reads at a glance.
    """
    path = Path(path)
    colors = _coupling_colors(result.grid.coupling_ids)
    pts = []
    for cell in result.cells:
        if cell.analysis is None:
            continue
        a = cell.analysis
        pts.append((cell.coupling_id, a.total_motor_mass, a.trace, a.copper_total,
                    cell.on_front))
    pairs = [("total motor mass [kg]", 1, "trace [kg m$^2$]", 2),
             ("total motor mass [kg]", 1, "copper energy [J]", 3),
             ("trace [kg m$^2$]", 2, "copper energy [J]", 3)]
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 4.0))
    for ax, (xl, xi, yl, yi) in zip(axes, pairs):
        for cid, *vals, front in pts:
            row = (cid, *vals)
            ax.scatter(row[xi], row[yi],
                       s=46 if front else 10,
                       color=colors[cid],
                       alpha=1.0 if front else 0.25,
                       edgecolors="black" if front else "none",
                       linewidths=0.6,
                       zorder=3 if front else 2)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.grid(True, alpha=0.3)
    handles = [Line2D([], [], marker="o", ls="", color=colors[cid], label=cid)
               for cid in result.grid.coupling_ids]
    fig.legend(handles=handles, fontsize=8, ncol=4, loc="upper center")
    fig.suptitle("mass / inertia / copper trade-off (large = Pareto front)", y=0.02, fontsize=9)
    fig.tight_layout(rect=(0, 0.05, 1, 0.90))
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_feasibility(result: StudyResult, path) -> Path:
    """Budget x coupling map: feasible, infeasible, or errored cells."""
    path = Path(path)
    budgets = list(result.grid.budgets)
    couplings = list(result.grid.coupling_ids)
    grid = np.zeros((len(couplings), len(budgets)))
    for i, cid in enumerate(couplings):
        for j, cell in enumerate(result.coupling_cells(cid)):
            if cell.error is not None:
                grid[i, j] = 2.0
            elif cell.analysis is None:
                grid[i, j] = 1.0
    cmap = ListedColormap(["#2e8b57", "#d9534f", "#7a7a7a"])
    fig, ax = plt.subplots(figsize=(7.5, 0.45 * len(couplings) + 1.4))
    ax.imshow(grid, cmap=cmap, vmin=0, vmax=2, aspect="auto", interpolation="nearest")
    ax.set_yticks(range(len(couplings)), couplings, fontsize=8)
    step = max(len(budgets) // 8, 1)
    ax.set_xticks(range(0, len(budgets), step),
                  [f"{b:g}" for b in budgets[::step]], fontsize=8)
    ax.set_xlabel("mass budget [kg]")
    ax.set_title("feasibility (green = optimal, red = infeasible, gray = error)", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_operation_domains(design: Design, library, tasks: Trajectory, path) -> Path:
    """Motor-space view of one design: domain polygons plus demanded samples.

    One panel per actuator. The demanded points are the task projected
    through the coupling and gears with the gear efficiency applied, i.e.
    exactly what the feasibility check compares against the polygon.
    """
    path = Path(path)
    report = check_feasibility(design, tasks.velocities, tasks.torques, library=library)
    w_m = design.motor_velocities(tasks.velocities)
    tau_m = effective_motor_torques(design, tasks.torques)
    n = design.size
    ncols = min(n, 3)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.6 * ncols, 3.2 * nrows),
                             squeeze=False)
    for i in range(nrows * ncols):
        ax = axes[i // ncols][i % ncols]
        if i >= n:
            ax.axis("off")
            continue
        poly = library.polygon_for(design.motors[i])
        verts = np.vstack([poly.vertices, poly.vertices[:1]])
        ax.plot(verts[:, 0], verts[:, 1], color="tab:blue", lw=1.4)
        ok = report.margins[:, i] >= 0
        ax.scatter(w_m[ok, i], tau_m[ok, i], s=4, color="tab:green", alpha=0.5)
        if np.any(~ok):
            ax.scatter(w_m[~ok, i], tau_m[~ok, i], s=8, color="tab:red", zorder=3)
        ax.set_title(f"act {i + 1}: {design.motors[i].id}  N={design.ratios[i]:g}",
                     fontsize=9)
        ax.set_xlabel("motor velocity [rad/s]", fontsize=8)
        ax.set_ylabel("motor torque [Nm]", fontsize=8)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def render_study_figures(result: StudyResult, out_dir) -> list[Path]:
    """Write the four study figures into out_dir and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        plot_trace_curves(result, out / "trace_vs_budget.png"),
        plot_copper_curves(result, out / "copper_vs_budget.png"),
        plot_pareto(result, out / "pareto.png"),
        plot_feasibility(result, out / "feasibility.png"),
    ]
