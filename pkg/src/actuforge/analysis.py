"""Post-hoc characterization of solved designs.

Everything here is read-only over a solved design: joint-space inertia
ellipsoid, winding (copper) losses over a task, torque-capability polytope
in joint space, force-capability polytope at the foot for a leg
configuration, and the Pareto front over study metrics.

The capability polytopes are velocity-dependent: by default each motor may
exert its full rated peak torque in both directions (the zero-velocity
datasheet box); given per-motor velocities, the available interval is the
vertical slice of the operation polygon at that speed, which shrinks toward
the domain boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .components import Library
from .errors import DimensionError, SingularConfigurationError
from .optimizer import DesignSolution, design_from_solution
from .tasking import Trajectory
from .transmission import Design

# Tolerance for halfspace membership of computed polytope vertices.
VERTEX_SLACK = 1e-9


# ---------------------------------------------------------------------------
# Inertia
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InertiaReport:
    """Joint-space reflected inertia matrix with its ellipsoid spectrum.

    Eigenvalues are sorted descending; the trace (the optimizer's per-sample
    objective) equals their sum.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    trace: float

    def as_dict(self) -> dict:
        return {
            "matrix": [[float(x) for x in row] for row in self.matrix],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "trace": float(self.trace),
        }


def inertia_report(solution: DesignSolution, library: Library) -> InertiaReport:
    return inertia_report_for(design_from_solution(library, solution))


def inertia_report_for(design: Design) -> InertiaReport:
    matrix = design.joint_inertia()
    eig = np.linalg.eigvalsh(matrix)[::-1]
    trace = float(np.trace(matrix))
    if eig[-1] <= 0:
        raise SingularConfigurationError("inertia matrix must be positive definite")
    if abs(trace - eig.sum()) > 1e-9 * max(1.0, abs(trace)):
        raise AssertionError("eigenvalue sum drifted from trace")
    return InertiaReport(matrix=matrix, eigenvalues=eig, trace=trace)


# ---------------------------------------------------------------------------
# Copper loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CopperLossReport:
    """Resistive winding losses P = R * (tau_m / k_t)^2 along a task.

    ``power`` is per sample and motor (W); ``per_task`` maps each provenance
    segment to (per-motor energies J, segment total J) by trapezoidal
    integration; ``total`` sums the segments.
    """

    power: np.ndarray
    per_task: tuple[tuple[str, tuple[float, ...], float], ...]
    total: float

    def segment_total(self, name: str) -> float:
        for seg, _, tot in self.per_task:
            if seg == name:
                return tot
        raise KeyError(f"no segment {name!r}")

    def as_dict(self) -> dict:
        return {
            "per_task": {
                seg: {"per_motor_J": list(motors), "total_J": tot}
                for seg, motors, tot in self.per_task
            },
            "total_J": float(self.total),
        }


def copper_loss(solution: DesignSolution, tasks: Trajectory, library: Library) -> CopperLossReport:
    return copper_loss_for(design_from_solution(library, solution), tasks)


def copper_loss_for(design: Design, tasks: Trajectory) -> CopperLossReport:
    tau_m = design.motor_torques(tasks.torques)
    k_t = np.array([m.torque_constant for m in design.motors])
    resistance = np.array([m.winding_resistance for m in design.motors])
    power = resistance * (tau_m / k_t) ** 2
    per_task = []
    total = 0.0
    for seg in tasks.segments:
        energy = np.trapezoid(power[seg.start : seg.stop], dx=tasks.dt, axis=0)
        seg_total = float(energy.sum())
        per_task.append((seg.name, tuple(float(e) for e in energy), seg_total))
        total += seg_total
    return CopperLossReport(power=power, per_task=tuple(per_task), total=total)


# ---------------------------------------------------------------------------
# Capability polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CapabilityPolytope:
    """Convex polytope in joint-torque or task-force space.

    Halfspaces use unit normals (normal . x <= offset); every listed vertex
    satisfies every halfspace within 1e-9.
    """

    space: str                 # "joint" | "task"
    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    volume: float

    def __post_init__(self):
        if self.space not in ("joint", "task"):
            raise ValueError(f"space must be joint or task, got {self.space!r}")
        if self.volume < 0:
            raise AssertionError("polytope volume must be nonnegative")
        if len(self.vertices):
            worst = float((self.vertices @ self.normals.T - self.offsets[None, :]).max())
            if worst > VERTEX_SLACK:
                raise AssertionError(f"vertex violates halfspace by {worst:.2e}")

    def contains(self, points: np.ndarray, slack: float = VERTEX_SLACK) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts @ self.normals.T - self.offsets[None, :]).max(axis=1) <= slack

    def as_dict(self) -> dict:
        return {
            "space": self.space,
            "normals": [[float(x) for x in row] for row in self.normals],
            "offsets": [float(x) for x in self.offsets],
            "vertices": [[float(x) for x in row] for row in self.vertices],
            "volume": float(self.volume),
        }


def motor_torque_intervals(design: Design, library: Library, motor_velocity=None) -> list[tuple[float, float]]:
    """Per-motor available torque interval.

    None velocity: the symmetric datasheet box [-peak, peak].  With a
    velocity vector: the operation polygon's vertical slice at each motor's
    speed (empty slices collapse to zero width).
    """
    if motor_velocity is None:
        return [(-m.peak_torque, m.peak_torque) for m in design.motors]
    v = np.asarray(motor_velocity, dtype=float)
    if v.shape != (design.size,):
        raise DimensionError(f"need {design.size} motor velocities, got shape {v.shape}")
    return [library.polygon_for(m).torque_slice(float(v[i])) for i, m in enumerate(design.motors)]


def joint_torque_polytope(solution: DesignSolution, library: Library, motor_velocity=None) -> CapabilityPolytope:
    """Achievable joint torques: the motor-torque box mapped through tau_j = C^-T N tau_m.

    A parallelotope; its volume is |det(C^-T N)| times the box volume.
    """
    design = design_from_solution(library, solution)
    return joint_torque_polytope_for(design, library, motor_velocity)


def joint_torque_polytope_for(design: Design, library: Library, motor_velocity=None) -> CapabilityPolytope:
    intervals = motor_torque_intervals(design, library, motor_velocity)
    lo = np.array([a for a, _ in intervals])
    hi = np.array([b for _, b in intervals])
    ratios = design.ratios
    fwd = design.coupling.inverse.T * ratios[None, :]        # C^-T N, motor box -> joint torques
    back = (design.coupling.jacobian / ratios[None, :]).T    # N^-1 C^T, rows bound the box

    # lo <= back @ tau_j <= hi, normalized row-wise
    norms = np.linalg.norm(back, axis=1)
    normals = np.concatenate([back / norms[:, None], -back / norms[:, None]])
    offsets = np.concatenate([hi / norms, -lo / norms])

    corners = np.array(list(itertools.product(*intervals)))
    vertices = corners @ fwd.T
    volume = abs(float(np.linalg.det(fwd))) * float(np.prod(hi - lo))
    return CapabilityPolytope(space="joint", normals=normals, offsets=offsets,
                              vertices=vertices, volume=volume)


def halfspace_vertices(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Vertex enumeration of {x : normals @ x <= offsets} by exhaustive
    d-combinations of active planes; fine for the <= 10-plane polytopes here."""
    A = np.asarray(normals, dtype=float)
    b = np.asarray(offsets, dtype=float)
    d = A.shape[1]
    scale = max(float(np.abs(A).max()), 1.0)
    verts: list[np.ndarray] = []
    for idx in itertools.combinations(range(len(A)), d):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) <= 1e-12 * scale**d:
            continue
        x = np.linalg.solve(sub, b[list(idx)])
        if (A @ x - b).max() <= VERTEX_SLACK:
            if not any(np.linalg.norm(x - v) <= 1e-9 for v in verts):
                verts.append(x)
    return np.array(verts) if verts else np.empty((0, d))


def _polygon_area(points: np.ndarray) -> float:
    if len(points) < 3:
        return 0.0
    center = points.mean(axis=0)
    rel = points - center
    order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))
    p = points[order]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _polytope_volume(vertices: np.ndarray) -> float:
    d = vertices.shape[1] if vertices.ndim == 2 else 0
    if len(vertices) <= d:
        return 0.0
    if d == 2:
        return _polygon_area(vertices)
    try:
        return float(ConvexHull(vertices).volume)
    except QhullError:
        return 0.0       # flat (degenerate slice) polytopes have zero volume


def wrench_polytope(rows: np.ndarray, lo: np.ndarray, hi: np.ndarray, space: str = "task") -> CapabilityPolytope:
    """Polytope {F : lo <= rows @ F <= hi} with vertex enumeration and volume."""
    rows = np.asarray(rows, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 1e-12
    # zero rows only constrain when their interval excludes 0; they carry no
    # direction, so an infeasible zero row empties the polytope
    if np.any((~keep) & ((lo > VERTEX_SLACK) | (hi < -VERTEX_SLACK))):
        d = rows.shape[1]
        return CapabilityPolytope(space=space, normals=np.eye(d), offsets=np.full(d, -1.0),
                                  vertices=np.empty((0, d)), volume=0.0)
    rows, lo, hi, norms = rows[keep], lo[keep], hi[keep], norms[keep]
    normals = np.concatenate([rows / norms[:, None], -rows / norms[:, None]])
    offsets = np.concatenate([hi / norms, -lo / norms])
    vertices = halfspace_vertices(normals, offsets)
    return CapabilityPolytope(space=space, normals=normals, offsets=offsets,
                              vertices=vertices, volume=_polytope_volume(vertices))


def force_capability_polytope(
    solution: DesignSolution,
    library: Library,
    kin: "LegKinematics",
    q,
    motor_velocity=None,
) -> CapabilityPolytope:
    """Foot forces realizable at configuration q: {F : lo <= N^-1 C^T J^T F <= hi}."""
    design = design_from_solution(library, solution)
    return force_capability_polytope_for(design, library, kin, q, motor_velocity)


def force_capability_polytope_for(design: Design, library: Library, kin: "LegKinematics", q, motor_velocity=None) -> CapabilityPolytope:
    jac = leg_jacobian(kin, q)
    if np.linalg.matrix_rank(jac, tol=1e-9) < 3:
        raise SingularConfigurationError("singular configuration")
    intervals = motor_torque_intervals(design, library, motor_velocity)
    lo = np.array([a for a, _ in intervals])
    hi = np.array([b for _, b in intervals])
    back = (design.coupling.jacobian / design.ratios[None, :]).T    # N^-1 C^T
    rows = back @ jac.T
    return wrench_polytope(rows, lo, hi, space="task")


def fcp_log_volume_stats(design: Design, library: Library, kin: "LegKinematics", configurations, motor_velocity=None):
    """Mean and standard deviation of log-volume over a configuration set.

    Configurations yielding singular Jacobians or zero volume are skipped;
    returns (mean, std, volumes) with volumes aligned to the input order and
    NaN at skipped entries.
    """
    volumes = np.full(len(configurations), np.nan)
    logs = []
    for i, q in enumerate(configurations):
        try:
            poly = force_capability_polytope_for(design, library, kin, q, motor_velocity)
        except SingularConfigurationError:
            continue
        volumes[i] = poly.volume
        if poly.volume > 0:
            logs.append(math.log(poly.volume))
    if not logs:
        return float("nan"), float("nan"), volumes
    arr = np.array(logs)
    return float(arr.mean()), float(arr.std()), volumes


# ---------------------------------------------------------------------------
# Leg kinematics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LegKinematics:
    """Five-joint serial leg: hip-yaw (z), hip-roll (x), hip-pitch (y),
    knee-pitch (y), ankle-pitch (y).

    ``hip_offsets`` translates from the yaw origin to the co-located
    roll/pitch center, in the yaw-rotated frame.  The foot point is the
    ankle origin (a point foot), so the ankle column of the point Jacobian
    is zero by construction.
    """

    thigh: float = 0.22
    shank: float = 0.22
    hip_offsets: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.thigh > 0 and self.shank > 0):
            raise ValueError("link lengths must be positive")
        object.__setattr__(self, "hip_offsets", tuple(float(x) for x in self.hip_offsets))


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def forward_kinematics(kin: LegKinematics, q):
    """Joint origins, world joint axes, and the foot point for configuration q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (5,):
        raise DimensionError(f"leg needs 5 joint angles, got shape {q.shape}")
    origins = np.zeros((5, 3))
    axes = np.zeros((5, 3))

    axes[0] = (0.0, 0.0, 1.0)
    rot = _rot_z(q[0])
    hip = rot @ np.asarray(kin.hip_offsets)
    origins[1] = hip
    axes[1] = rot @ (1.0, 0.0, 0.0)
    rot = rot @ _rot_x(q[1])
    origins[2] = hip
    axes[2] = rot @ (0.0, 1.0, 0.0)
    rot = rot @ _rot_y(q[2])
    knee = hip + rot @ (0.0, 0.0, -kin.thigh)
    origins[3] = knee
    axes[3] = rot @ (0.0, 1.0, 0.0)
    rot = rot @ _rot_y(q[3])
    ankle = knee + rot @ (0.0, 0.0, -kin.shank)
    origins[4] = ankle
    axes[4] = rot @ (0.0, 1.0, 0.0)

    return origins, axes, ankle


def leg_jacobian(kin: LegKinematics, q) -> np.ndarray:
    """3x5 point Jacobian of the foot: column i = z_i x (p_foot - p_i)."""
    origins, axes, foot = forward_kinematics(kin, q)
    return np.stack([np.cross(axes[i], foot - origins[i]) for i in range(5)], axis=1)


# ---------------------------------------------------------------------------
# Pareto front
# ---------------------------------------------------------------------------

def pareto_front(points) -> list[tuple[float, ...]]:
    """Non-dominated subset under component-wise minimization, in input order.

    A point is dominated when some other point is <= in every component and
    strictly < in at least one; exact duplicates are all kept.
    """
    pts = [tuple(float(x) for x in p) for p in points]
    if not pts:
        return []
    width = len(pts[0])
    if any(len(p) != width for p in pts):
        raise DimensionError("points disagree on dimensionality")

    # any dominator of p sorts lexicographically before p, so one forward
    # pass against the running front suffices
    order = sorted(range(len(pts)), key=lambda i: pts[i])
    front_idx: list[int] = []
    for i in order:
        p = pts[i]
        dominated = False
        for j in front_idx:
            f = pts[j]
            if all(f[k] <= p[k] for k in range(width)) and f != p:
                dominated = True
                break
        if not dominated:
            front_idx.append(i)
    keep = set(front_idx)
    return [pts[i] for i in range(len(pts)) if i in keep]


def pareto_mask(points) -> np.ndarray:
    """Boolean mask over ``points`` marking the non-dominated ones."""
    pts = [tuple(float(x) for x in p) for p in points]
    front = pareto_front(pts)
    remaining: dict[tuple, int] = {}
    for p in front:
        remaining[p] = remaining.get(p, 0) + 1
    mask = np.zeros(len(pts), dtype=bool)
    for i, p in enumerate(pts):
        if remaining.get(p, 0) > 0:
            mask[i] = True
            remaining[p] -= 1
    return mask
