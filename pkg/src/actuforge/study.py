"""Grid studies over (mass budget x coupling), persisted reproducibly.

A study solves the same selection problem at every point of a budget grid
for every requested coupling, attaches per-cell analysis summaries, marks
the Pareto front over (total motor mass, inertia trace, copper energy), and
writes everything to a directory that can be reloaded and re-verified.

Reproducibility contract: the persisted files ``manifest``, ``library.yaml``,
``tasks.csv``, ``summary.tables`` and everything under ``cells/`` are
byte-deterministic for identical inputs at any parallelism level; wall-clock
metadata lives in the ``timing.json`` sidecar, which is excluded from that
surface on purpose.  ``study_content_hash`` hashes exactly the deterministic
set.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import yaml

from .analysis import (
    LegKinematics,
    copper_loss_for,
    force_capability_polytope_for,
    inertia_report_for,
    joint_torque_polytope_for,
    pareto_mask,
)
from .components import Library, library_to_dict, load_library, save_library
from .errors import ActuforgeError, StudyStoreError, ValidationError
from .optimizer import (
    ActuatorDiagnosis,
    DesignProblem,
    DesignRule,
    DesignSolution,
    Diagnosis,
    design_from_solution,
    enumerate_cells,
    solve,
)
from .tasking import Segment, Trajectory, load_trajectory, save_trajectory

SCHEMA_VERSION = 1

TIMING_FILE = "timing.json"

# Leg configuration used for the per-cell FCP volume summary (5-joint
# libraries only): a bent-knee stance well away from the straight-leg
# singularity.
ANALYSIS_LEG_CONFIGURATION = (0.0, 0.0, -0.3, 0.6, -0.3)


def budget_grid(lo: float, step: float, hi: float) -> tuple[float, ...]:
    """Inclusive budget ladder from lo to hi; endpoints snapped to 1e-9."""
    if step <= 0 or hi < lo:
        raise ValidationError("budgets", f"need step > 0 and hi >= lo, got {lo}:{step}:{hi}")
    out = []
    k = 0
    while True:
        b = round(lo + k * step, 9)
        if b > hi + 1e-9:
            break
        out.append(min(b, hi))
        k += 1
    return tuple(out)


@dataclass(frozen=True)
class StudyGrid:
    """The study request: base problem plus the (budgets x couplings) grid."""

    library: Library
    tasks: Trajectory
    budgets: tuple[float, ...]
    coupling_ids: tuple[str, ...]
    rules: tuple[DesignRule, ...] = ()
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        object.__setattr__(self, "coupling_ids", tuple(self.coupling_ids))
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.budgets or not self.coupling_ids:
            raise ValidationError("grid", "budgets and couplings must be non-empty")
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ValidationError("budgets", "budgets must be strictly increasing")
        for cid in self.coupling_ids:
            self.library.coupling(cid)     # raises KeyError on unknown ids
        if any(r.kind == "mass_budget" for r in self.rules):
            raise ValidationError("rules", "the budget axis supplies mass_budget; remove it from rules")


@dataclass(frozen=True)
class CellAnalysis:
    trace: float
    objective: float
    total_motor_mass: float
    eigenvalues: tuple[float, ...]
    copper_per_task: tuple[tuple[str, float], ...]
    copper_total: float
    tcp_volume: float
    fcp_volume: float | None


@dataclass(frozen=True)
class StudyCell:
    budget: float
    coupling_id: str
    solution: DesignSolution | None
    analysis: CellAnalysis | None
    error: str | None = None
    on_front: bool = False


@dataclass(frozen=True, eq=False)
class StudyResult:
    grid: StudyGrid
    cells: tuple[StudyCell, ...]
    input_hash: str
    schema_version: int = SCHEMA_VERSION
    timing: dict | None = None

    def __eq__(self, other):
        # timing is run-specific metadata and deliberately not compared
        return (
            isinstance(other, StudyResult)
            and self.grid == other.grid
            and self.cells == other.cells
            and self.input_hash == other.input_hash
            and self.schema_version == other.schema_version
        )

    def cell(self, budget: float, coupling_id: str) -> StudyCell:
        for c in self.cells:
            if c.coupling_id == coupling_id and abs(c.budget - budget) <= 1e-9:
                return c
        raise KeyError(f"no cell ({budget}, {coupling_id})")

    def coupling_cells(self, coupling_id: str) -> list[StudyCell]:
        return [c for c in self.cells if c.coupling_id == coupling_id]


def compute_input_hash(grid: StudyGrid) -> str:
    h = hashlib.sha256()
    h.update(_canonical_library_bytes(grid.library))
    h.update(_canonical_task_bytes(grid.tasks))
    h.update(_canonical_json(_grid_spec_dict(grid)).encode())
    return h.hexdigest()


def _canonical_library_bytes(library: Library) -> bytes:
    from .components import _ExactFloatDumper
    return yaml.dump(library_to_dict(library), Dumper=_ExactFloatDumper,
                     sort_keys=False, default_flow_style=None).encode()


def _canonical_task_bytes(tasks: Trajectory) -> bytes:
    n = tasks.joint_count
    header = ",".join(["t"] + [f"w{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)])
    rows = [header]
    for k in range(tasks.sample_count):
        fields = [repr(float(tasks.times[k]))]
        fields += [repr(float(x)) for x in tasks.velocities[k]]
        fields += [repr(float(x)) for x in tasks.torques[k]]
        rows.append(",".join(fields))
    return ("\n".join(rows) + "\n").encode()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _rule_dict(rule: DesignRule) -> dict:
    return {
        "kind": rule.kind,
        "limit": rule.limit,
        "component_a": rule.component_a,
        "component_b": rule.component_b,
        "actuator": rule.actuator,
    }


def _rule_from_dict(d: dict) -> DesignRule:
    return DesignRule(kind=d["kind"], limit=d.get("limit"), component_a=d.get("component_a"),
                      component_b=d.get("component_b"), actuator=d.get("actuator"))


def _grid_spec_dict(grid: StudyGrid) -> dict:
    return {
        "budgets": list(grid.budgets),
        "couplings": list(grid.coupling_ids),
        "rules": [_rule_dict(r) for r in grid.rules],
        "margin": grid.margin,
        "segments": [[s.name, s.start, s.stop] for s in grid.tasks.segments],
    }


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def _solve_cell(grid: StudyGrid, coupling, cells, budget: float) -> StudyCell:
    rules = grid.rules + (DesignRule.mass_budget(budget),)
    problem = DesignProblem(library=grid.library, tasks=grid.tasks, coupling=coupling,
                            rules=rules, margin=grid.margin)
    try:
        solution = solve(problem, cells=cells)
    except ActuforgeError as exc:
        return StudyCell(budget=budget, coupling_id=coupling.id, solution=None,
                         analysis=None, error=f"{type(exc).__name__}: {exc}")
    analysis = _analyze(grid, solution) if solution.optimal else None
    return StudyCell(budget=budget, coupling_id=coupling.id, solution=solution, analysis=analysis)


def _analyze(grid: StudyGrid, solution: DesignSolution) -> CellAnalysis:
    design = design_from_solution(grid.library, solution)
    inertia = inertia_report_for(design)
    copper = copper_loss_for(design, grid.tasks)
    tcp = joint_torque_polytope_for(design, grid.library)
    fcp_volume = None
    if design.size == 5:
        fcp = force_capability_polytope_for(design, grid.library, LegKinematics(),
                                            ANALYSIS_LEG_CONFIGURATION)
        fcp_volume = fcp.volume
    return CellAnalysis(
        trace=solution.trace,
        objective=solution.objective_value,
        total_motor_mass=solution.total_motor_mass,
        eigenvalues=tuple(float(x) for x in inertia.eigenvalues),
        copper_per_task=tuple((seg, tot) for seg, _, tot in copper.per_task),
        copper_total=copper.total,
        tcp_volume=tcp.volume,
        fcp_volume=fcp_volume,
    )


def run_grid(grid: StudyGrid, parallelism: int = 1, progress=None) -> StudyResult:
    """Solve every (budget, coupling) cell; deterministic at any parallelism.

    Cells are dispatched to a fixed-size worker pool and gathered by index.
    Feasibility enumeration is shared across the budget axis: cells depend
    on the coupling, margin, and per-actuator rules, never on the budget.
    ``progress(done, total)`` is called as cells finish (any order).
    """
    if parallelism < 1:
        raise ValidationError("parallelism", "parallelism must be >= 1")
    t0 = time.perf_counter()
    couplings = [grid.library.coupling(cid) for cid in grid.coupling_ids]
    base_rules = grid.rules

    def enumerate_for(coupling):
        problem = DesignProblem(library=grid.library, tasks=grid.tasks, coupling=coupling,
                                rules=base_rules, margin=grid.margin)
        return enumerate_cells(problem)

    total = len(grid.budgets) * len(couplings)
    done = 0
    done_lock = threading.Lock()
    jobs = [(bi, ci) for bi in range(len(grid.budgets)) for ci in range(len(couplings))]

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        cell_sets = list(pool.map(enumerate_for, couplings))

        def work(job):
            bi, ci = job
            out = _solve_cell(grid, couplings[ci], cell_sets[ci], grid.budgets[bi])
            nonlocal done
            with done_lock:
                done += 1
                count = done
            if progress is not None:
                progress(count, total)
            return out

        cells = list(pool.map(work, jobs))

    cells = _annotate_pareto(cells)
    timing = {"total_seconds": time.perf_counter() - t0, "parallelism": parallelism}
    return StudyResult(grid=grid, cells=tuple(cells), input_hash=compute_input_hash(grid),
                       timing=timing)


def _annotate_pareto(cells: list[StudyCell]) -> list[StudyCell]:
    solved = [i for i, c in enumerate(cells) if c.analysis is not None]
    points = [(cells[i].analysis.total_motor_mass, cells[i].analysis.trace,
               cells[i].analysis.copper_total) for i in solved]
    if not points:
        return cells
    mask = pareto_mask(points)
    out = list(cells)
    for flag, i in zip(mask, solved):
        if flag:
            c = out[i]
            out[i] = StudyCell(budget=c.budget, coupling_id=c.coupling_id, solution=c.solution,
                               analysis=c.analysis, error=c.error, on_front=True)
    return out


def detect_saturation(result: StudyResult) -> dict[str, float | None]:
    """Per coupling, the smallest budget from which the selected design stops
    changing up to the top of the grid; None when never feasible."""
    out: dict[str, float | None] = {}
    for cid in result.grid.coupling_ids:
        cells = result.coupling_cells(cid)
        last = cells[-1]
        if last.solution is None or not last.solution.optimal:
            out[cid] = None
            continue
        onset = last.budget
        for c in reversed(cells):
            if c.solution is None or not c.solution.optimal:
                break
            if c.solution.selection != last.solution.selection:
                break
            onset = c.budget
        out[cid] = onset
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def solution_to_dict(sol: DesignSolution) -> dict:
    d = {
        "status": sol.status,
        "coupling_id": sol.coupling_id,
        "selection": [[m, r] for m, r in sol.selection] if sol.selection else None,
        "objective_value": sol.objective_value,
        "trace": sol.trace,
        "total_motor_mass": sol.total_motor_mass,
        "cost_units": sol.cost_units,
        "method": sol.method,
        "nodes": sol.nodes,
        "diagnosis": None,
    }
    if sol.diagnosis is not None:
        diag = sol.diagnosis
        d["diagnosis"] = {
            "kind": diag.kind,
            "message": diag.message,
            "suggestion": diag.suggestion,
            "min_feasible_mass": diag.min_feasible_mass,
            "actuators": [
                {
                    "actuator_index": a.actuator_index,
                    "required_velocity": a.required_velocity,
                    "required_torque": a.required_torque,
                    "feasible_pairs": a.feasible_pairs,
                    "min_feasible_mass": a.min_feasible_mass,
                    "best_candidate": list(a.best_candidate) if a.best_candidate else None,
                }
                for a in diag.actuators
            ],
        }
    return d


def solution_from_dict(d: dict) -> DesignSolution:
    diagnosis = None
    if d.get("diagnosis"):
        dd = d["diagnosis"]
        diagnosis = Diagnosis(
            kind=dd["kind"], message=dd["message"], suggestion=dd["suggestion"],
            min_feasible_mass=dd["min_feasible_mass"],
            actuators=tuple(
                ActuatorDiagnosis(
                    actuator_index=a["actuator_index"],
                    required_velocity=a["required_velocity"],
                    required_torque=a["required_torque"],
                    feasible_pairs=a["feasible_pairs"],
                    min_feasible_mass=a["min_feasible_mass"],
                    best_candidate=tuple(a["best_candidate"]) if a["best_candidate"] else None,
                )
                for a in dd["actuators"]
            ),
        )
    return DesignSolution(
        status=d["status"],
        coupling_id=d["coupling_id"],
        selection=tuple((m, float(r)) for m, r in d["selection"]) if d.get("selection") else None,
        objective_value=d["objective_value"],
        trace=d["trace"],
        total_motor_mass=d["total_motor_mass"],
        cost_units=d["cost_units"],
        method=d["method"],
        nodes=d.get("nodes", 0),
        diagnosis=diagnosis,
    )


def _analysis_to_dict(a: CellAnalysis | None) -> dict | None:
    if a is None:
        return None
    return {
        "trace": a.trace,
        "objective": a.objective,
        "total_motor_mass": a.total_motor_mass,
        "eigenvalues": list(a.eigenvalues),
        "copper_per_task": [[s, e] for s, e in a.copper_per_task],
        "copper_total": a.copper_total,
        "tcp_volume": a.tcp_volume,
        "fcp_volume": a.fcp_volume,
    }


def _analysis_from_dict(d: dict | None) -> CellAnalysis | None:
    if d is None:
        return None
    return CellAnalysis(
        trace=d["trace"], objective=d["objective"], total_motor_mass=d["total_motor_mass"],
        eigenvalues=tuple(d["eigenvalues"]),
        copper_per_task=tuple((s, float(e)) for s, e in d["copper_per_task"]),
        copper_total=d["copper_total"], tcp_volume=d["tcp_volume"], fcp_volume=d["fcp_volume"],
    )


def _cell_to_json(cell: StudyCell) -> str:
    return _canonical_json({
        "budget": cell.budget,
        "coupling": cell.coupling_id,
        "solution": solution_to_dict(cell.solution) if cell.solution else None,
        "analysis": _analysis_to_dict(cell.analysis),
        "error": cell.error,
        "on_front": cell.on_front,
    }) + "\n"


def _cell_from_json(text: str) -> StudyCell:
    d = json.loads(text)
    return StudyCell(
        budget=float(d["budget"]),
        coupling_id=d["coupling"],
        solution=solution_from_dict(d["solution"]) if d.get("solution") else None,
        analysis=_analysis_from_dict(d.get("analysis")),
        error=d.get("error"),
        on_front=bool(d.get("on_front", False)),
    )


def cell_key(budget: float, coupling_id: str) -> str:
    return f"{float(budget)!r}_{coupling_id}"


# ---------------------------------------------------------------------------
# Summary tables
# ---------------------------------------------------------------------------

def summary_tables(result: StudyResult) -> dict[str, tuple[list[str], list[list[str]]]]:
    """Summary as named (header, rows) tables, all values pre-stringified."""

    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return repr(x)
        return str(x)

    solutions, copper, capability, pareto, feasibility = [], [], [], [], []
    for c in result.cells:
        sol, an = c.solution, c.analysis
        status = "error" if c.error else (sol.status if sol else "error")
        if an is not None:
            motors = ";".join(m for m, _ in sol.selection)
            gears = ";".join(f"{r:g}" for _, r in sol.selection)
            solutions.append([c.coupling_id, fmt(c.budget), status, fmt(an.total_motor_mass),
                              fmt(an.trace), fmt(an.objective), fmt(an.copper_total), motors, gears])
            for seg, energy in an.copper_per_task:
                copper.append([c.coupling_id, fmt(c.budget), seg, fmt(energy)])
            capability.append([c.coupling_id, fmt(c.budget), fmt(an.tcp_volume), fmt(an.fcp_volume)])
            pareto.append([c.coupling_id, fmt(c.budget), fmt(an.total_motor_mass), fmt(an.trace),
                           fmt(an.copper_total), "1" if c.on_front else "0"])
        kind = ""
        if sol is not None and sol.diagnosis is not None:
            kind = sol.diagnosis.kind
        feasibility.append([c.coupling_id, fmt(c.budget), status, kind])

    return {
        "solutions": (
            ["coupling", "budget_kg", "status", "total_mass_kg", "trace_kgm2",
             "objective_kgm2", "copper_total_J", "motors", "gears"],
            solutions,
        ),
        "copper": (["coupling", "budget_kg", "segment", "energy_J"], copper),
        "capability": (["coupling", "budget_kg", "tcp_volume", "fcp_volume"], capability),
        "pareto": (["coupling", "budget_kg", "total_mass_kg", "trace_kgm2",
                    "copper_total_J", "on_front"], pareto),
        "feasibility": (["coupling", "budget_kg", "status", "diagnosis"], feasibility),
    }


def summarize(result: StudyResult) -> str:
    """Render the summary tables to the delimited text format."""
    buf = io.StringIO()
    for name, (header, rows) in summary_tables(result).items():
        buf.write(f"# table: {name}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        buf.write("\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def persist(result: StudyResult, directory, force: bool = False) -> None:
    """Write the study directory; the manifest is written last so partially
    written directories are never mistaken for complete studies."""
    root = Path(directory)
    if root.exists() and any(root.iterdir()) and not force:
        raise StudyStoreError(f"{root} exists and is not empty (use force to overwrite)")
    (root / "cells").mkdir(parents=True, exist_ok=True)

    files: dict[str, bytes] = {}
    files["library.yaml"] = _canonical_library_bytes(result.grid.library)
    files["tasks.csv"] = _canonical_task_bytes(result.grid.tasks)
    for cell in result.cells:
        files[f"cells/{cell_key(cell.budget, cell.coupling_id)}.result"] = _cell_to_json(cell).encode()
    files["summary.tables"] = summarize(result).encode()

    for rel, data in files.items():
        (root / rel).write_bytes(data)

    manifest = {
        "schema_version": result.schema_version,
        "input_hash": result.input_hash,
        "grid": _grid_spec_dict(result.grid),
        "files": {rel: _sha256(data) for rel, data in sorted(files.items())},
    }
    if result.timing is not None:
        (root / TIMING_FILE).write_text(json.dumps(result.timing, sort_keys=True, indent=1) + "\n")
    (root / "manifest").write_text(_canonical_json(manifest) + "\n")


def load(directory) -> StudyResult:
    root = Path(directory)
    manifest_path = root / "manifest"
    if not manifest_path.exists():
        raise StudyStoreError(f"{root} has no manifest; not a (complete) study directory")
    manifest = json.loads(manifest_path.read_text())
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise StudyStoreError(f"study schema version {version} != supported {SCHEMA_VERSION}")

    for rel, expect in manifest["files"].items():
        path = root / rel
        if not path.exists():
            raise StudyStoreError(f"missing study file {rel}")
        actual = _sha256(path.read_bytes())
        if actual != expect:
            raise StudyStoreError(f"checksum mismatch in {rel}")

    library = load_library(root / "library.yaml")
    spec = manifest["grid"]
    raw_tasks = load_trajectory(root / "tasks.csv")
    segments = tuple(Segment(name, start, stop) for name, start, stop in spec["segments"])
    tasks = Trajectory(times=raw_tasks.times, velocities=raw_tasks.velocities,
                       torques=raw_tasks.torques, segments=segments)
    grid = StudyGrid(
        library=library,
        tasks=tasks,
        budgets=tuple(spec["budgets"]),
        coupling_ids=tuple(spec["couplings"]),
        rules=tuple(_rule_from_dict(d) for d in spec["rules"]),
        margin=spec["margin"],
    )

    recomputed = compute_input_hash(grid)
    if recomputed != manifest["input_hash"]:
        raise StudyStoreError("input hash mismatch: study inputs changed since the run")

    cells = []
    for budget in grid.budgets:
        for cid in grid.coupling_ids:
            rel = f"cells/{cell_key(budget, cid)}.result"
            if rel not in manifest["files"]:
                raise StudyStoreError(f"manifest lists no cell file for ({budget}, {cid})")
            cells.append(_cell_from_json((root / rel).read_text()))

    timing = None
    timing_path = root / TIMING_FILE
    if timing_path.exists():
        timing = json.loads(timing_path.read_text())
    return StudyResult(grid=grid, cells=tuple(cells), input_hash=manifest["input_hash"],
                       schema_version=version, timing=timing)


def study_content_hash(directory) -> str:
    """Hash of the deterministic study surface: manifest plus every file the
    manifest lists; the timing sidecar is excluded by design."""
    root = Path(directory)
    manifest_path = root / "manifest"
    if not manifest_path.exists():
        raise StudyStoreError(f"{root} has no manifest")
    manifest_bytes = manifest_path.read_bytes()
    manifest = json.loads(manifest_bytes)
    h = hashlib.sha256()
    h.update(manifest_bytes)
    for rel in sorted(manifest["files"]):
        h.update(rel.encode())
        h.update((root / rel).read_bytes())
    return h.hexdigest()
