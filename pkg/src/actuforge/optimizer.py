"""Exact drivetrain selection: binary program assembly and two exact solvers.

The design problem picks one motor and one gear per actuator, under a fixed
coupling, to minimize the summed trace of the joint-space reflected inertia
matrix over the task samples, subject to task feasibility (every projected
sample inside every motor's operation domain), a total motor-mass budget,
and logical designer rules.  Because the motor-gear product variables are
pre-eliminated into per-actuator candidate cells, the program is a
multiple-choice knapsack plus side rows.

Two solvers, both exact:

* ``solve_mckp``: dynamic program over total mass discretized at 1 gram.
  Applicable when all motor masses are gram-exact and no side rows exist.
* ``solve_bnb``: best-first branch and bound over actuator groups with a
  fractional-knapsack lower bound; handles side rows and arbitrary masses.

Objective arithmetic is integral: each cell's inertia contribution is
quantized onto a shared grid (``CostModel``, default 1e-15 kg*m^2 per unit,
grown adaptively if values would overflow) so cost comparison, tie-breaking,
and cross-solver agreement are exact integer operations.  Tie-breaking is
total: (objective, total mass, gear ratios lexicographically, motor ids
lexicographically), so repeated solves are bit-identical.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

from .components import CouplingSpec, Library
from .errors import ActuforgeError, DimensionError, SolverLimitError, ValidationError
from .tasking import Trajectory
from .transmission import Design, check_feasibility, inertia_trace

# Containment slack for the per-sample half-plane feasibility test.
FEASIBILITY_SLACK = 1e-9

# Mass comparisons when masses are not gram-exact.
MASS_SLACK = 1e-9

# Default objective grid (kg*m^2 per integer cost unit).
DEFAULT_COST_UNIT = 1e-15

# Cap on integer cell costs; keeps n-term path sums and INF + cost inside int64.
_MAX_CELL_COST = 2**56

_INF = 2**62

_BNB_DEFAULT_CAP = 2_000_000
_RECONSTRUCT_CAP = 200_000


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignRule:
    """One designer constraint.

    kinds: ``mass_budget`` (limit kg), ``requires(a, b)`` meaning "if a is
    used then b is used" encoded as x_a <= x_b, ``mutex(a, b)``, and
    ``per_actuator_copper_energy_limit`` (actuator 1-based, limit J over the
    whole task).

    Component references are ``motor:<id>@<actuator>``, ``gear:<ratio>@<actuator>``
    or ``coupling:<id>``; the kind prefix may be dropped when unambiguous and
    the actuator may be written ``act3`` or ``3``.
    """

    kind: str
    limit: float | None = None
    component_a: str | None = None
    component_b: str | None = None
    actuator: int | None = None

    def __post_init__(self):
        if self.kind not in ("mass_budget", "requires", "mutex", "per_actuator_copper_energy_limit"):
            raise ValidationError("rules[].kind", f"unknown rule kind {self.kind!r}")
        if self.kind in ("mass_budget", "per_actuator_copper_energy_limit"):
            if self.limit is None or not (math.isfinite(self.limit) and self.limit > 0):
                raise ValidationError("rules[].limit", f"limit > 0 violated (got {self.limit!r})")
        if self.kind in ("requires", "mutex") and not (self.component_a and self.component_b):
            raise ValidationError("rules[].component_a", f"{self.kind} needs two component references")
        if self.kind == "per_actuator_copper_energy_limit" and self.actuator is None:
            raise ValidationError("rules[].actuator", "copper limit needs an actuator index")

    @classmethod
    def mass_budget(cls, limit: float) -> "DesignRule":
        return cls(kind="mass_budget", limit=limit)

    @classmethod
    def requires(cls, component_a: str, component_b: str) -> "DesignRule":
        return cls(kind="requires", component_a=component_a, component_b=component_b)

    @classmethod
    def mutex(cls, component_a: str, component_b: str) -> "DesignRule":
        return cls(kind="mutex", component_a=component_a, component_b=component_b)

    @classmethod
    def copper_limit(cls, actuator: int, limit: float) -> "DesignRule":
        return cls(kind="per_actuator_copper_energy_limit", actuator=actuator, limit=limit)


_REF_RE = re.compile(r"^(?:(motor|gear|coupling):)?([^@]+?)(?:@(?:act)?(\d+))?$")


@dataclass(frozen=True)
class _ComponentRef:
    kind: str                 # motor | gear | coupling
    motor_id: str | None
    gear_ratio: float | None
    coupling_id: str | None
    actuator: int | None      # 0-based


def _parse_ref(ref: str, library: Library, joint_count: int, path: str) -> _ComponentRef:
    m = _REF_RE.match(ref.strip())
    if not m:
        raise ValidationError(path, f"unparseable component reference {ref!r}")
    kind, token, act = m.group(1), m.group(2).strip(), m.group(3)
    actuator = None
    if act is not None:
        actuator = int(act) - 1
        if not (0 <= actuator < joint_count):
            raise ValidationError(path, f"actuator index {act} out of range 1..{joint_count}")
    if kind is None:
        if any(mo.id == token for mo in library.motors):
            kind = "motor"
        elif any(c.id == token for c in library.couplings):
            kind = "coupling"
        else:
            try:
                float(token)
                kind = "gear"
            except ValueError:
                raise ValidationError(path, f"reference {ref!r} matches no library component") from None
    if kind == "motor":
        if not any(mo.id == token for mo in library.motors):
            raise ValidationError(path, f"unknown motor {token!r}")
        if actuator is None:
            raise ValidationError(path, f"motor reference {ref!r} needs an @actuator")
        return _ComponentRef("motor", token, None, None, actuator)
    if kind == "gear":
        try:
            ratio = float(token)
        except ValueError:
            raise ValidationError(path, f"bad gear ratio in {ref!r}") from None
        if not any(g.ratio == ratio for g in library.gears):
            raise ValidationError(path, f"no gear with ratio {ratio:g} in library")
        if actuator is None:
            raise ValidationError(path, f"gear reference {ref!r} needs an @actuator")
        return _ComponentRef("gear", None, ratio, None, actuator)
    if not any(c.id == token for c in library.couplings):
        raise ValidationError(path, f"unknown coupling {token!r}")
    return _ComponentRef("coupling", None, None, token, None)


# ---------------------------------------------------------------------------
# Problem and cells
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignProblem:
    """One fixed-coupling selection problem over a library and task."""

    library: Library
    tasks: Trajectory
    coupling: CouplingSpec
    rules: tuple[DesignRule, ...] = ()
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.coupling.size != self.tasks.joint_count:
            raise DimensionError(
                f"coupling {self.coupling.id!r} is {self.coupling.size}-dof, "
                f"task has {self.tasks.joint_count} joints"
            )
        if not (0.0 <= self.margin < 1.0):
            raise ValidationError("margin", f"margin in [0, 1) violated (got {self.margin!r})")
        for i, rule in enumerate(self.rules):
            for attr in ("component_a", "component_b"):
                ref = getattr(rule, attr)
                if ref is not None:
                    _parse_ref(ref, self.library, self.joint_count, f"rules[{i}].{attr}")
            if rule.kind == "per_actuator_copper_energy_limit":
                if not (1 <= rule.actuator <= self.joint_count):
                    raise ValidationError(f"rules[{i}].actuator", f"actuator {rule.actuator} out of range")

    @property
    def joint_count(self) -> int:
        return self.coupling.size

    @property
    def mass_budget(self) -> float | None:
        limits = [r.limit for r in self.rules if r.kind == "mass_budget"]
        return min(limits) if limits else None

    @property
    def side_rules(self) -> tuple[DesignRule, ...]:
        return tuple(r for r in self.rules if r.kind in ("requires", "mutex"))


@dataclass(frozen=True)
class CandidateCell:
    """One pre-linearized motor-gear choice for one actuator.

    The cell is the composite of the motor and gear selection binaries, so
    the quadratic selection products never reach the solver.
    ``reflected_inertia_contribution`` is the cell's objective coefficient:
    rotor_inertia * N^2, scaled by the coupling's trace weight for this
    actuator, times the task sample count.
    """

    actuator_index: int          # 0-based
    motor_id: str
    gear_ratio: float
    reflected_inertia_contribution: float
    mass: float
    feasible: bool
    copper_energy_per_task: tuple[tuple[str, float], ...]   # (segment name, J)
    worst_margin: float
    first_violation: int | None = None
    infeasible_reason: str | None = None
    # solver plumbing
    motor_index: int = -1
    gear_index: int = -1
    mass_g: int | None = None

    @property
    def copper_energy_total(self) -> float:
        return sum(e for _, e in self.copper_energy_per_task)


def _gram_exact(mass: float) -> int | None:
    grams = mass * 1000.0
    nearest = round(grams)
    return int(nearest) if abs(grams - nearest) <= 1e-6 and nearest >= 0 else None


def _copper_rule_limits(problem: DesignProblem) -> dict[int, float]:
    limits: dict[int, float] = {}
    for r in problem.rules:
        if r.kind == "per_actuator_copper_energy_limit":
            idx = r.actuator - 1
            limits[idx] = min(limits.get(idx, math.inf), r.limit)
    return limits


def enumerate_feasible_pairs(problem: DesignProblem, actuator: int) -> list[CandidateCell]:
    """All motor-gear cells for one actuator, feasibility-tested sample-wise.

    Cells are ordered by (gear ratio, motor id).  Infeasible cells are kept,
    flagged, and carry the first violating sample for diagnosis.
    """
    return _enumerate_actuator(problem, actuator, *_actuator_demands(problem))


def enumerate_cells(problem: DesignProblem) -> list[list[CandidateCell]]:
    """Cells for every actuator, sharing the projected-task arrays."""
    w_act, tau_act, copper_int = _actuator_demands(problem)
    return [_enumerate_actuator(problem, i, w_act, tau_act, copper_int) for i in range(problem.joint_count)]


def _actuator_demands(problem: DesignProblem):
    traj, coupling = problem.tasks, problem.coupling
    w_act = traj.velocities @ coupling.inverse.T       # actuator velocities at N = 1
    tau_act = traj.torques @ coupling.jacobian         # actuator torques at N = 1
    # integral of tau_act^2 dt per segment, for closed-form copper energy
    copper_int = {}
    for seg in traj.segments:
        sl = slice(seg.start, seg.stop)
        copper_int[seg.name] = np.trapezoid(tau_act[sl] ** 2, dx=traj.dt, axis=0)
    return w_act, tau_act, copper_int


def _enumerate_actuator(problem, actuator, w_act, tau_act, copper_int) -> list[CandidateCell]:
    lib, coupling = problem.library, problem.coupling
    weight = float(coupling.trace_weights[actuator])
    samples = problem.tasks.sample_count
    w = w_act[:, actuator]
    u = tau_act[:, actuator]
    copper_limit = _copper_rule_limits(problem).get(actuator, math.inf)

    cells = []
    order = sorted(
        itertools.product(enumerate(lib.gears), enumerate(lib.motors)),
        key=lambda p: (p[0][1].ratio, p[1][1].id),
    )
    for (gear_index, gear), (motor_index, motor) in order:
        poly = lib.polygon_for(motor)
        if problem.margin:
            poly = poly.scaled(1.0 - problem.margin)
        ratio, eta = gear.ratio, gear.efficiency
        # margins of all samples at once: offsets - n0 * (N w) - n1 * (tau / (N eta))
        proj = poly.offsets[None, :] - np.outer(w * ratio, poly.normals[:, 0]) \
            - np.outer(u / (ratio * eta), poly.normals[:, 1])
        sample_margin = proj.min(axis=1)
        worst_at = int(sample_margin.argmin())
        worst = float(sample_margin[worst_at])
        copper = tuple(
            (name, float(motor.winding_resistance / (ratio * motor.torque_constant) ** 2 * integral[actuator]))
            for name, integral in copper_int.items()
        )
        feasible = worst >= -FEASIBILITY_SLACK
        reason, violation = None, None
        if not feasible:
            reason, violation = "domain", worst_at
        elif sum(e for _, e in copper) > copper_limit:
            feasible, reason = False, "copper_rule"
        cells.append(CandidateCell(
            actuator_index=actuator,
            motor_id=motor.id,
            gear_ratio=ratio,
            reflected_inertia_contribution=motor.rotor_inertia * ratio * ratio * weight * samples,
            mass=motor.mass,
            feasible=feasible,
            copper_energy_per_task=copper,
            worst_margin=worst,
            first_violation=violation,
            infeasible_reason=reason,
            motor_index=motor_index,
            gear_index=gear_index,
            mass_g=_gram_exact(motor.mass),
        ))
    return cells


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Shared integral grid for objective coefficients.

    All solvers and oracles quantize through the same model, so cost
    comparison is exact integer arithmetic; the grid is far below the 1e-9
    relative tolerance at which solutions are verified against float
    recomputation.
    """

    unit: float = DEFAULT_COST_UNIT

    def units(self, value: float) -> int:
        return round(value / self.unit)

    def value(self, units: int) -> float:
        return units * self.unit


def build_cost_model(contributions) -> CostModel:
    unit = DEFAULT_COST_UNIT
    peak = max(contributions, default=0.0)
    while peak / unit > _MAX_CELL_COST:
        unit *= 1000.0
    return CostModel(unit=unit)


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearRow:
    """Sparse inequality sum(coeff * var) <= bound (or == when equality)."""

    name: str
    coeffs: tuple[tuple[int, float], ...]
    bound: float
    equality: bool = False

    def evaluate(self, assignment) -> float:
        return sum(c * assignment[i] for i, c in self.coeffs)

    def satisfied(self, assignment, tol: float = 1e-9) -> bool:
        lhs = self.evaluate(assignment)
        if self.equality:
            return abs(lhs - self.bound) <= tol
        return lhs <= self.bound + tol


@dataclass(frozen=True, eq=False)
class BilpModel:
    """Binary program over candidate-cell variables.

    ``groups[i]`` lists the variable indices of actuator i's exclusivity
    group (sum = 1).  ``rows`` are the side constraints beyond exclusivity
    and the mass budget.  ``masses_g`` is present iff every mass is
    gram-exact, which is what entitles the DP solver.
    """

    variable_names: tuple[str, ...]
    costs: tuple[int, ...]
    masses: tuple[float, ...]
    groups: tuple[tuple[int, ...], ...]
    budget: float | None
    rows: tuple[LinearRow, ...]
    cells: tuple[CandidateCell, ...]
    cost_model: CostModel
    coupling_id: str
    masses_g: tuple[int, ...] | None = None
    budget_g: int | None = None
    infeasible_reason: str | None = None

    @property
    def mckp_shaped(self) -> bool:
        return not self.rows and self.masses_g is not None


def _ref_var_set(ref: _ComponentRef, model_cells, groups) -> set[int] | None:
    """Variable indices matching a motor/gear reference; None for coupling refs."""
    if ref.kind == "coupling":
        return None
    out = set()
    for var in groups[ref.actuator]:
        cell = model_cells[var]
        if ref.kind == "motor" and cell.motor_id == ref.motor_id:
            out.add(var)
        elif ref.kind == "gear" and cell.gear_ratio == ref.gear_ratio:
            out.add(var)
    return out


def assemble_bilp(problem: DesignProblem, cells: list[list[CandidateCell]] | None = None) -> BilpModel:
    """Build the binary program from feasible cells.

    ``cells`` may be passed in when already enumerated (grid studies reuse
    one enumeration across many budgets; only rules and budget may differ
    between the problem used for enumeration and this one).
    """
    if cells is None:
        cells = enumerate_cells(problem)
    if len(cells) != problem.joint_count:
        raise DimensionError(f"expected {problem.joint_count} cell groups, got {len(cells)}")

    names, flat, masses, groups = [], [], [], []
    infeasible_reason = None
    for actuator, group_cells in enumerate(cells):
        usable = [c for c in group_cells if c.feasible]
        if not usable:
            infeasible_reason = infeasible_reason or f"actuator {actuator + 1} has no feasible motor-gear pair"
        start = len(flat)
        for c in usable:
            names.append(f"x[{c.motor_id},N={c.gear_ratio:g}]@{actuator + 1}")
            flat.append(c)
            masses.append(c.mass)
        groups.append(tuple(range(start, len(flat))))

    model_costs = build_cost_model([c.reflected_inertia_contribution / max(problem.tasks.sample_count, 1)
                                    for c in flat] or [0.0])
    # sample count is a constant factor on every cell, so it is kept out of
    # the integer costs and reapplied when reporting the objective
    costs = tuple(model_costs.units(c.reflected_inertia_contribution / problem.tasks.sample_count) for c in flat)

    grams = [c.mass_g for c in flat]
    gram_ok = all(g is not None for g in grams)
    budget = problem.mass_budget
    budget_g = None
    if budget is not None and gram_ok:
        budget_g = int(math.floor(budget * 1000.0 + 1e-6))

    rows = []
    for i, rule in enumerate(problem.side_rules):
        ref_a = _parse_ref(rule.component_a, problem.library, problem.joint_count, f"rules[{i}].component_a")
        ref_b = _parse_ref(rule.component_b, problem.library, problem.joint_count, f"rules[{i}].component_b")
        set_a = _ref_var_set(ref_a, flat, groups)
        set_b = _ref_var_set(ref_b, flat, groups)
        # coupling references are constants under a fixed coupling
        const_a = None if set_a is not None else float(ref_a.coupling_id == problem.coupling.id)
        const_b = None if set_b is not None else float(ref_b.coupling_id == problem.coupling.id)
        coeffs: dict[int, float] = {}
        bound = 0.0 if rule.kind == "requires" else 1.0
        sign_b = -1.0 if rule.kind == "requires" else 1.0
        if set_a is not None:
            for v in set_a:
                coeffs[v] = coeffs.get(v, 0.0) + 1.0
        else:
            bound -= const_a
        if set_b is not None:
            for v in set_b:
                coeffs[v] = coeffs.get(v, 0.0) + sign_b
        else:
            bound -= sign_b * const_b
        if not coeffs:
            if 0.0 > bound:
                infeasible_reason = infeasible_reason or f"rule {rule.kind}({rule.component_a}, {rule.component_b}) is unsatisfiable"
            continue
        rows.append(LinearRow(
            name=f"{rule.kind}[{i}]",
            coeffs=tuple(sorted(coeffs.items())),
            bound=bound,
        ))

    return BilpModel(
        variable_names=tuple(names),
        costs=costs,
        masses=tuple(masses),
        groups=tuple(groups),
        budget=budget,
        rows=tuple(rows),
        cells=tuple(flat),
        cost_model=model_costs,
        coupling_id=problem.coupling.id,
        masses_g=tuple(grams) if gram_ok else None,
        budget_g=budget_g,
        infeasible_reason=infeasible_reason,
    )


def linearize_product(builder: "ModelBuilder", x: str, y: str) -> str:
    """Add an auxiliary binary z with z = x * y enforced by three linear rows.

    The rows are z <= x, z <= y, z >= x + y - 1; over binary assignments they
    admit exactly the product.  Used where a model needs the AND of two
    selections as its own variable.
    """
    if x == y:
        raise ValidationError("linearize", "product variables must be distinct")
    z = builder.add_variable(f"and[{x},{y}]")
    xi, yi, zi = builder.index(x), builder.index(y), builder.index(z)
    builder.add_row(LinearRow(f"{z}<=x", ((zi, 1.0), (xi, -1.0)), 0.0))
    builder.add_row(LinearRow(f"{z}<=y", ((zi, 1.0), (yi, -1.0)), 0.0))
    builder.add_row(LinearRow(f"{z}>=x+y-1", ((xi, 1.0), (yi, 1.0), (zi, -1.0)), 1.0))
    return z


class ModelBuilder:
    """Tiny registry for hand-built binary models (tests, linearization)."""

    def __init__(self):
        self.names: list[str] = []
        self.rows: list[LinearRow] = []

    def add_variable(self, name: str) -> str:
        if name in self.names:
            raise ValidationError("variables", f"duplicate variable {name!r}")
        self.names.append(name)
        return name

    def index(self, name: str) -> int:
        return self.names.index(name)

    def add_row(self, row: LinearRow) -> None:
        self.rows.append(row)

    def feasible_assignments(self) -> list[tuple[int, ...]]:
        """All binary assignments satisfying every row (exhaustive; small models)."""
        out = []
        for bits in itertools.product((0, 1), repeat=len(self.names)):
            if all(r.satisfied(bits) for r in self.rows):
                out.append(bits)
        return out


# ---------------------------------------------------------------------------
# Solutions and diagnosis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActuatorDiagnosis:
    actuator_index: int                       # 0-based
    required_velocity: float                  # max |actuator-side velocity|, N = 1
    required_torque: float                    # max |actuator-side torque|, N = 1
    feasible_pairs: int
    min_feasible_mass: float | None
    best_candidate: tuple[str, float, float] | None   # (motor_id, gear_ratio, worst_margin)


@dataclass(frozen=True)
class Diagnosis:
    kind: str            # task_coverage | mass_budget | rules
    message: str
    actuators: tuple[ActuatorDiagnosis, ...]
    min_feasible_mass: float | None
    suggestion: str


@dataclass(frozen=True)
class DesignSolution:
    status: str                                            # optimal | infeasible
    coupling_id: str
    selection: tuple[tuple[str, float], ...] | None = None  # per actuator (motor_id, ratio)
    objective_value: float | None = None                    # kg*m^2, summed over samples
    trace: float | None = None                              # kg*m^2, per sample
    total_motor_mass: float | None = None
    cost_units: int | None = None
    method: str | None = None
    diagnosis: Diagnosis | None = None
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _selection_key(model: BilpModel, choice: tuple[int, ...]):
    cells = [model.cells[v] for v in choice]
    cost = sum(model.costs[v] for v in choice)
    if model.masses_g is not None:
        mass_key = sum(model.masses_g[v] for v in choice)
    else:
        mass_key = sum(model.masses[v] for v in choice)
    return (
        cost,
        mass_key,
        tuple(c.gear_ratio for c in cells),
        tuple(c.motor_id for c in cells),
    )


def _solution_from_choice(problem: DesignProblem, model: BilpModel, choice, method: str, nodes: int) -> DesignSolution:
    cells = [model.cells[v] for v in choice]
    design = Design(
        coupling=problem.coupling,
        motors=tuple(problem.library.motor(c.motor_id) for c in cells),
        gears=tuple(next(g for g in problem.library.gears if g.ratio == c.gear_ratio) for c in cells),
    )
    trace = design.inertia_trace()
    objective = trace * problem.tasks.sample_count
    cost = sum(model.costs[v] for v in choice)
    _verify(problem, model, design, choice, cost, objective)
    return DesignSolution(
        status="optimal",
        coupling_id=problem.coupling.id,
        selection=tuple((c.motor_id, c.gear_ratio) for c in cells),
        objective_value=objective,
        trace=trace,
        total_motor_mass=design.total_motor_mass,
        cost_units=cost,
        method=method,
        nodes=nodes,
    )


def _verify(problem, model, design, choice, cost_units, objective) -> None:
    # Defensive recomputation of every constraint; a failure here is a solver bug.
    quantized = model.cost_model.value(cost_units) * problem.tasks.sample_count
    if abs(quantized - objective) > 1e-9 * max(1.0, abs(objective)):
        raise ActuforgeError(
            f"objective mismatch: quantized {quantized!r} vs recomputed {objective!r}"
        )
    budget = problem.mass_budget
    if budget is not None and design.total_motor_mass > budget + MASS_SLACK:
        raise ActuforgeError(f"mass budget violated: {design.total_motor_mass} > {budget}")
    report = check_feasibility(
        design, problem.tasks.velocities, problem.tasks.torques,
        library=problem.library, margin=problem.margin, slack=FEASIBILITY_SLACK,
    )
    if not report.feasible:
        raise ActuforgeError(f"solution violates task feasibility at {report.violations[:3]}")
    assignment = [0] * len(model.variable_names)
    for v in choice:
        assignment[v] = 1
    for row in model.rows:
        if not row.satisfied(assignment):
            raise ActuforgeError(f"solution violates rule row {row.name}")


def _diagnose(problem: DesignProblem, cells, model: BilpModel | None, searched: bool) -> Diagnosis:
    w_act = problem.tasks.velocities @ problem.coupling.inverse.T
    tau_act = problem.tasks.torques @ problem.coupling.jacobian
    actuators = []
    uncovered = []
    min_mass_total = 0.0
    for i, group in enumerate(cells):
        feas = [c for c in group if c.feasible]
        best = max(group, key=lambda c: c.worst_margin, default=None)
        if not feas:
            uncovered.append(i)
        else:
            min_mass_total += min(c.mass for c in feas)
        actuators.append(ActuatorDiagnosis(
            actuator_index=i,
            required_velocity=float(np.abs(w_act[:, i]).max()),
            required_torque=float(np.abs(tau_act[:, i]).max()),
            feasible_pairs=len(feas),
            min_feasible_mass=min((c.mass for c in feas), default=None),
            best_candidate=(best.motor_id, best.gear_ratio, best.worst_margin) if best else None,
        ))
    actuators = tuple(actuators)

    if uncovered:
        which = ", ".join(str(i + 1) for i in uncovered)
        return Diagnosis(
            kind="task_coverage",
            message=f"no motor-gear pair covers the task for actuator(s) {which} under coupling {problem.coupling.id}",
            actuators=actuators,
            min_feasible_mass=None,
            suggestion="add faster or stronger motors, extend gear ratios, or relax the margin",
        )
    budget = problem.mass_budget
    if budget is not None and min_mass_total > budget + MASS_SLACK and not problem.side_rules:
        return Diagnosis(
            kind="mass_budget",
            message=f"lightest feasible selection weighs {min_mass_total:.3f} kg, budget is {budget:.3f} kg",
            actuators=actuators,
            min_feasible_mass=min_mass_total,
            suggestion=f"raise the mass budget to at least {min_mass_total:.3f} kg",
        )
    if searched:
        return Diagnosis(
            kind="rules",
            message="no assignment satisfies the designer rules within the mass budget",
            actuators=actuators,
            min_feasible_mass=min_mass_total,
            suggestion="drop or loosen one requires/mutex rule, or raise the mass budget",
        )
    reason = model.infeasible_reason if model else "model infeasible"
    return Diagnosis(
        kind="rules",
        message=reason or "model infeasible",
        actuators=actuators,
        min_feasible_mass=min_mass_total,
        suggestion="review the designer rules",
    )


# ---------------------------------------------------------------------------
# DP solver (gram-exact MCKP)
# ---------------------------------------------------------------------------

def _group_cells(model: BilpModel):
    return [[(v, model.cells[v]) for v in group] for group in model.groups]


def _backward_dp(groups, W: int, cost_of, mass_of) -> np.ndarray:
    """dp[g][w] = min cost of choosing one cell per group g..end at exact mass w."""
    n = len(groups)
    dp = np.full((n + 1, W + 1), _INF, dtype=np.int64)
    dp[n, 0] = 0
    for g in range(n - 1, -1, -1):
        row = dp[g]
        nxt = dp[g + 1]
        for item in groups[g]:
            mg, c = mass_of(item), cost_of(item)
            if mg > W:
                continue
            np.minimum(row[mg:], nxt[: W + 1 - mg] + c, out=row[mg:])
    return dp


def solve_mckp(problem: DesignProblem, model: BilpModel | None = None,
               cells: list[list[CandidateCell]] | None = None) -> DesignSolution:
    """Exact DP for the gram-discretized multiple-choice knapsack.

    Requires gram-exact masses and no side rows; otherwise use solve_bnb.
    Tie-breaking is reconstructed exactly: among minimum-cost selections the
    one with minimum total mass, then lexicographically smallest gear ratios,
    then motor ids.
    """
    if model is None:
        model = assemble_bilp(problem, cells)
    if not model.mckp_shaped:
        raise ValidationError("model", "solve_mckp needs gram-exact masses and no side rows")
    if model.infeasible_reason is not None:
        return DesignSolution(status="infeasible", coupling_id=model.coupling_id,
                              diagnosis=_diagnose(problem, cells or enumerate_cells(problem), model, False))

    groups = _group_cells(model)
    cap = sum(max(model.masses_g[v] for v, _ in g) for g in groups)
    W = cap if model.budget_g is None else min(model.budget_g, cap)
    if W < 0 or any(min(model.masses_g[v] for v, _ in g) > W for g in groups):
        return _mass_infeasible(problem, model, cells)

    dp = _backward_dp(groups, W, lambda it: model.costs[it[0]], lambda it: model.masses_g[it[0]])
    total = dp[0]
    cost_star = int(total.min())
    if cost_star >= _INF:
        return _mass_infeasible(problem, model, cells)
    m_star = int(np.flatnonzero(total == cost_star)[0])

    choice = _reconstruct(model, groups, dp, W, cost_star, m_star)
    return _solution_from_choice(problem, model, choice, "dp", nodes=0)


def _mass_infeasible(problem, model, cells):
    return DesignSolution(
        status="infeasible", coupling_id=model.coupling_id,
        diagnosis=_diagnose(problem, cells or enumerate_cells(problem), model, True),
    )


def _reconstruct(model, groups, dp, W, cost_star, m_star) -> tuple[int, ...]:
    n = len(groups)

    def frontier(stage_groups, stage_dp, pick_key):
        """Walk groups forward keeping every (mass, cost) prefix state that can
        still extend to the exact optimum, fixing the minimum pick_key at each
        group; returns the per-group picked keys."""
        states = {(0, 0)}
        picks = []
        for g in range(n):
            by_key = {}
            for (w, c) in states:
                for v, cell in stage_groups[g]:
                    w2 = w + model.masses_g[v]
                    if w2 > m_star:
                        continue
                    c2 = c + model.costs[v]
                    # prefix extends to the optimum iff the best exact-mass
                    # completion spends exactly the remaining cost
                    if stage_dp[g + 1][m_star - w2] == cost_star - c2:
                        by_key.setdefault(pick_key(cell), set()).add((w2, c2))
            if not by_key:
                raise ActuforgeError("tie-break reconstruction lost the optimum")
            best = min(by_key)
            picks.append(best)
            states = by_key[best]
            if len(states) > _RECONSTRUCT_CAP:
                raise SolverLimitError("tie-break frontier exceeded its state cap")
        return picks

    gear_pick = frontier(groups, dp, lambda cell: cell.gear_ratio)
    fixed = [[(v, c) for v, c in groups[g] if c.gear_ratio == gear_pick[g]] for g in range(n)]
    dp_fixed = _backward_dp(fixed, W, lambda it: model.costs[it[0]], lambda it: model.masses_g[it[0]])
    motor_pick = frontier(fixed, dp_fixed, lambda cell: cell.motor_id)

    choice = []
    for g in range(n):
        v = next(v for v, c in fixed[g] if c.motor_id == motor_pick[g])
        choice.append(v)
    return tuple(choice)


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------

def _lp_hull(points):
    """Lower convex hull of (mass, cost) cells: masses ascending, costs strictly
    descending, slopes convex; the LP-relaxation support set."""
    pts = sorted(points)
    stair = []
    for m, c in pts:
        if stair and m == stair[-1][0]:
            continue                      # same mass, first (cheapest) wins
        if not stair or c < stair[-1][1]:
            stair.append((m, c))
    hull = []
    for p in stair:
        while len(hull) >= 2:
            (m1, c1), (m2, c2) = hull[-2], hull[-1]
            # drop m2 if it lies above segment m1-p: cross product test
            if (c2 - c1) * (p[0] - m1) >= (p[1] - c1) * (m2 - m1):
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


class _LpBound:
    """Fractional multiple-choice knapsack bound, exact in integer arithmetic.

    For a suffix of groups and a remaining gram budget, the LP optimum is the
    per-group minimum-mass hull cell plus the best budget-limited run of hull
    increments (sorted by cost saved per gram, globally; convexity makes the
    per-group order automatic).  ceil(LP) is a valid integer lower bound and
    is computed without floats.
    """

    def __init__(self, model: BilpModel):
        groups = _group_cells(model)
        n = len(groups)
        hulls = [_lp_hull([(model.masses_g[v], model.costs[v]) for v, _ in g]) for g in groups]
        self.base_mass = [0] * (n + 1)
        self.base_cost = [0] * (n + 1)
        self.increments = [[] for _ in range(n + 1)]
        for g in range(n - 1, -1, -1):
            h = hulls[g]
            self.base_mass[g] = self.base_mass[g + 1] + h[0][0]
            self.base_cost[g] = self.base_cost[g + 1] + h[0][1]
            incs = [(h[k][0] - h[k - 1][0], h[k - 1][1] - h[k][1]) for k in range(1, len(h))]
            merged = list(self.increments[g + 1]) + incs
            # cost saved per gram, descending; exact via cross-multiplication
            merged.sort(key=_inc_order)
            self.increments[g] = merged

    def bound(self, g: int, budget_left: int) -> int | None:
        """ceil(LP) for groups g.. with at most budget_left grams; None if even
        the minimum masses do not fit."""
        rem = budget_left - self.base_mass[g]
        if rem < 0:
            return None
        cost = self.base_cost[g]
        for dm, dc in self.increments[g]:
            if dm <= rem:
                rem -= dm
                cost -= dc
            else:
                cost -= (dc * rem) // dm      # floor of the fractional saving = ceil(LP)
                break
        return cost


def _inc_cmp(a, b):
    # sort by dc/dm descending without division: dc_a * dm_b vs dc_b * dm_a
    lhs = a[1] * b[0]
    rhs = b[1] * a[0]
    if lhs != rhs:
        return -1 if lhs > rhs else 1
    return 0


_inc_order = functools.cmp_to_key(_inc_cmp)


def solve_bnb(problem: DesignProblem, model: BilpModel | None = None,
              cells: list[list[CandidateCell]] | None = None,
              node_cap: int = _BNB_DEFAULT_CAP) -> DesignSolution:
    """Best-first branch and bound over the actuator groups.

    Lower bound: assigned cost plus per-group minima, tightened by the exact
    fractional-knapsack bound when masses are gram-exact.  Handles arbitrary
    side rows via partial-assignment bound checks.  Exhausts all nodes at the
    optimal cost, so the full tie-break order is honored exactly.
    """
    if model is None:
        model = assemble_bilp(problem, cells)
    if model.infeasible_reason is not None:
        return DesignSolution(status="infeasible", coupling_id=model.coupling_id,
                              diagnosis=_diagnose(problem, cells or enumerate_cells(problem), model, False))

    groups = _group_cells(model)
    n = len(groups)
    gram = model.masses_g is not None
    budget_g = model.budget_g if gram else None
    lp = _LpBound(model) if gram else None

    suffix_min_cost = [0] * (n + 1)
    suffix_min_mass = [0.0] * (n + 1)
    for g in range(n - 1, -1, -1):
        suffix_min_cost[g] = suffix_min_cost[g + 1] + min(model.costs[v] for v, _ in groups[g])
        key = model.masses_g if gram else model.masses
        suffix_min_mass[g] = suffix_min_mass[g + 1] + min(key[v] for v, _ in groups[g])

    # per row and group: the least possible coefficient any single choice adds
    row_coeff = [{v: c for v, c in row.coeffs} for row in model.rows]
    row_group_min = [
        [min(rc.get(v, 0.0) for v, _ in groups[g]) for g in range(n)] for rc in row_coeff
    ]
    row_suffix_min = [
        [sum(mins[h] for h in range(g, n)) for g in range(n + 1)] for mins in row_group_min
    ]

    def mass_of(v):
        return model.masses_g[v] if gram else model.masses[v]

    budget_val = budget_g if gram else model.budget
    best_key, best_choice = None, None
    counter = itertools.count()
    heap = []

    def lower_bound(g, cost, mass):
        lb = cost + suffix_min_cost[g]
        if gram and budget_g is not None:
            b = lp.bound(g, budget_g - mass)
            if b is None:
                return None
            lb = max(lb, cost + b)
        return lb

    root_lb = lower_bound(0, 0, 0)
    if root_lb is not None:
        heapq.heappush(heap, (root_lb, next(counter), 0, (), 0, 0 if gram else 0.0, tuple(0.0 for _ in model.rows)))
    expansions = 0

    while heap:
        lb, _, g, path, cost, mass, row_vals = heapq.heappop(heap)
        if best_key is not None and lb > best_key[0]:
            break   # heap is LB-ordered: nothing better or tie-relevant remains
        if g == n:
            key = _selection_key(model, path)
            if best_key is None or key < best_key:
                best_key, best_choice = key, path
            continue
        expansions += 1
        if expansions > node_cap:
            raise SolverLimitError(f"branch and bound exceeded {node_cap} node expansions")
        for v, cell in groups[g]:
            m2 = mass + mass_of(v)
            if budget_val is not None:
                limit = budget_val if gram else budget_val + MASS_SLACK
                if m2 + suffix_min_mass[g + 1] > limit:
                    continue
            c2 = cost + model.costs[v]
            rv2 = None
            ok = True
            for r, row in enumerate(model.rows):
                val = row_vals[r] + row_coeff[r].get(v, 0.0)
                if val + row_suffix_min[r][g + 1] > row.bound + 1e-9:
                    ok = False
                    break
                if rv2 is None:
                    rv2 = list(row_vals)
                rv2[r] = val
            if not ok:
                continue
            lb2 = lower_bound(g + 1, c2, m2)
            if lb2 is None:
                continue
            if best_key is not None and lb2 > best_key[0]:
                continue
            heapq.heappush(heap, (lb2, next(counter), g + 1, path + (v,), c2, m2,
                                  tuple(rv2) if rv2 is not None else row_vals))

    if best_choice is None:
        return DesignSolution(status="infeasible", coupling_id=model.coupling_id,
                              diagnosis=_diagnose(problem, cells or enumerate_cells(problem), model, True))
    sol = _solution_from_choice(problem, model, best_choice, "bnb", nodes=expansions)
    return sol


# ---------------------------------------------------------------------------
# Front door
# ---------------------------------------------------------------------------

def solve(problem: DesignProblem, cells: list[list[CandidateCell]] | None = None) -> DesignSolution:
    """Solve one fixed-coupling problem to proven optimality.

    Dispatches to the gram DP when the model is knapsack-shaped, else to
    branch and bound.  The returned solution has been re-verified against
    every constraint by direct recomputation.
    """
    if cells is None:
        cells = enumerate_cells(problem)
    model = assemble_bilp(problem, cells)
    if model.infeasible_reason is not None:
        return DesignSolution(status="infeasible", coupling_id=model.coupling_id,
                              diagnosis=_diagnose(problem, cells, model, False))
    if model.mckp_shaped:
        return solve_mckp(problem, model=model, cells=cells)
    return solve_bnb(problem, model=model, cells=cells)


def solve_over_couplings(
    library: Library,
    tasks: Trajectory,
    rules: tuple[DesignRule, ...] = (),
    margin: float = 0.0,
    couplings: list[CouplingSpec] | None = None,
) -> tuple[DesignSolution, dict[str, DesignSolution]]:
    """One solve per coupling; returns (best, per-coupling results).

    This realizes coupling selection by enumeration.  The best design is the
    minimum under the usual tie-break key with library order as the final
    tie, so the result is deterministic.
    """
    if couplings is None:
        couplings = list(library.couplings)
    results: dict[str, DesignSolution] = {}
    best: DesignSolution | None = None
    best_key = None
    for order, coupling in enumerate(couplings):
        sol = solve(DesignProblem(library=library, tasks=tasks, coupling=coupling, rules=rules, margin=margin))
        results[coupling.id] = sol
        if not sol.optimal:
            continue
        # cost units are grid-local to one model, so rank couplings by the
        # recomputed objective; later keys keep the comparison total
        key = (sol.objective_value, sol.total_motor_mass,
               tuple(r for _, r in sol.selection), tuple(m for m, _ in sol.selection), order)
        if best_key is None or key < best_key:
            best, best_key = sol, key
    if best is None:
        # surface the first coupling's diagnosis; all are infeasible
        best = results[couplings[0].id]
    return best, results


def design_from_solution(library: Library, solution: DesignSolution) -> Design:
    """Materialize a Design from an optimal solution's component ids."""
    if not solution.optimal:
        raise ActuforgeError("cannot materialize an infeasible solution")
    coupling = library.coupling(solution.coupling_id)
    motors = tuple(library.motor(mid) for mid, _ in solution.selection)
    gears = tuple(next(g for g in library.gears if g.ratio == r) for _, r in solution.selection)
    return Design(coupling=coupling, motors=motors, gears=gears)
