"""Component libraries: motors, gear ratios, actuator-joint couplings.

A library bundles the candidate components a drivetrain design is assembled
from, plus the torque-velocity template that turns a motor's rated numbers
into its operation-domain polygon.  Libraries are immutable after
validation and safe to share across worker processes; edits always go
through constructing a new ``Library``.

Coupling conventions: the coupling matrix ``C`` maps actuator velocities to
joint velocities.  Supported couplings are block-diagonal compositions of
1x1 identity blocks and the 2-DoF differential block

    D = 0.5 * [[1, 1], [-1, 1]]      with exact inverse [[1, -1], [1, 1]]

over consecutive joints.  Arbitrary invertible matrices are accepted
through a raw-matrix escape hatch and flagged unverified.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .errors import DegeneratePolygonError, ParseError, ValidationError

# 2-DoF differential block and its exact inverse.
DIFFERENTIAL_BLOCK = ((0.5, 0.5), (-0.5, 0.5))
DIFFERENTIAL_BLOCK_INVERSE = ((1.0, -1.0), (1.0, 1.0))

# Determinant guard for raw coupling matrices.
MIN_COUPLING_DET = 1e-9

# Collinearity tolerance for polygon construction, relative to coordinate scale.
_COLLINEAR_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Operation-domain polygon
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """A motor's torque-velocity operation domain.

    ``vertices`` is an (k, 2) array of (velocity rad/s, torque N*m) points in
    counter-clockwise order.  ``normals``/``offsets`` hold the half-space form
    with unit outward normals: a point p is inside iff normals @ p <= offsets.
    """

    vertices: np.ndarray
    normals: np.ndarray = field(repr=False, default=None)
    offsets: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise DegeneratePolygonError("polygon needs at least 3 (velocity, torque) vertices")
        if not np.all(np.isfinite(verts)):
            raise DegeneratePolygonError("polygon vertices must be finite")
        verts = _ccw_strictly_convex(verts)
        normals, offsets = _halfspaces(verts)
        verts.setflags(write=False)
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    def __eq__(self, other):
        return isinstance(other, ConvexPolygon) and np.array_equal(self.vertices, other.vertices)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @property
    def velocity_extent(self) -> tuple[float, float]:
        v = self.vertices[:, 0]
        return float(v.min()), float(v.max())

    @property
    def torque_extent(self) -> tuple[float, float]:
        t = self.vertices[:, 1]
        return float(t.min()), float(t.max())

    def margins(self, points: np.ndarray) -> np.ndarray:
        """Signed slack of each point against each half-space.

        Returns an (n_points, n_edges) array of ``offset - normal . p``;
        nonnegative everywhere means inside, and the row minimum is the
        distance to the nearest edge (negative when outside).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.offsets[None, :] - pts @ self.normals.T

    def contains(self, points: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        """Vectorized inclusive membership test with absolute tolerance ``slack``."""
        return self.margins(points).min(axis=1) >= -slack

    def scaled(self, factor: float) -> "ConvexPolygon":
        """Polygon shrunk (factor < 1) or grown about the origin."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return ConvexPolygon(self.vertices * factor)

    def torque_slice(self, velocity: float) -> tuple[float, float]:
        """Torque interval available at a fixed velocity (vertical slice).

        Outside the polygon's velocity extent the slice is empty and is
        reported as the zero-width interval (0.0, 0.0).
        """
        verts = self.vertices
        lo, hi = math.inf, -math.inf
        n = len(verts)
        for i in range(n):
            (v0, t0), (v1, t1) = verts[i], verts[(i + 1) % n]
            if (v0 - velocity) * (v1 - velocity) > 0:
                continue
            if v0 == v1:
                lo, hi = min(lo, t0, t1), max(hi, t0, t1)
            else:
                t = t0 + (velocity - v0) / (v1 - v0) * (t1 - t0)
                lo, hi = min(lo, t), max(hi, t)
        if lo > hi:
            return (0.0, 0.0)
        return (float(lo), float(hi))


def _ccw_strictly_convex(verts: np.ndarray) -> np.ndarray:
    """Validate strict convex position and return the cycle in CCW order.

    The returned array starts at the original first vertex so template
    vertex order is preserved up to orientation.
    """
    k = len(verts)
    scale = float(np.abs(verts).max())
    if scale == 0.0:
        raise DegeneratePolygonError("all vertices at the origin")
    tol = _COLLINEAR_RTOL * scale * scale

    order = np.lexsort((verts[:, 1], verts[:, 0]))
    if any(np.allclose(verts[order[i]], verts[order[i + 1]], atol=1e-12 * scale) for i in range(k - 1)):
        raise DegeneratePolygonError("duplicate vertices")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    # Andrew's monotone chain with strict turns; any input point that fails to
    # appear on the hull is interior or collinear, which we reject.
    hull_lo, hull_hi = [], []
    for idx in order:
        while len(hull_lo) >= 2 and cross(verts[hull_lo[-2]], verts[hull_lo[-1]], verts[idx]) <= tol:
            hull_lo.pop()
        hull_lo.append(idx)
    for idx in order[::-1]:
        while len(hull_hi) >= 2 and cross(verts[hull_hi[-2]], verts[hull_hi[-1]], verts[idx]) <= tol:
            hull_hi.pop()
        hull_hi.append(idx)
    hull = hull_lo[:-1] + hull_hi[:-1]
    if len(hull) != k:
        raise DegeneratePolygonError("vertices are collinear or not in strictly convex position")

    start = hull.index(0)
    hull = hull[start:] + hull[:start]
    out = verts[hull].astype(float)
    area2 = sum(
        out[i, 0] * out[(i + 1) % k, 1] - out[(i + 1) % k, 0] * out[i, 1] for i in range(k)
    )
    if abs(area2) <= tol:
        raise DegeneratePolygonError("zero-area polygon")
    return out


def _halfspaces(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.roll(verts, -1, axis=0) - verts
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    lengths = np.linalg.norm(normals, axis=1)
    normals = normals / lengths[:, None]
    offsets = np.einsum("ij,ij->i", normals, verts)
    return normals, offsets


# ---------------------------------------------------------------------------
# Component types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperationDomainTemplate:
    """Dimensionless vertex coefficients generating a motor's operation polygon.

    Vertex i of a motor's domain is (alpha[i] * rated_velocity,
    beta[i] * peak_torque).  Validity is scale-independent, so a template is
    checked once against the unit motor.
    """

    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if len(alpha) != len(beta):
            raise ValidationError("domain_template", "alpha and beta must have equal length")
        if len(alpha) < 3:
            raise ValidationError("domain_template", "need at least 3 vertex coefficients")
        try:
            ConvexPolygon(np.stack([alpha, beta], axis=1))
        except DegeneratePolygonError as exc:
            raise ValidationError("domain_template", f"induced polygon degenerate: {exc}") from exc

    def polygon(self, rated_velocity: float, peak_torque: float) -> ConvexPolygon:
        verts = np.stack(
            [np.asarray(self.alpha) * rated_velocity, np.asarray(self.beta) * peak_torque], axis=1
        )
        return ConvexPolygon(verts)


@dataclass(frozen=True)
class MotorSpec:
    """One motor candidate, all values strict SI.

    ``domain_override`` optionally replaces the library-wide template for
    this motor (designers tune per-motor safety margins that way).
    """

    id: str
    mass: float                  # kg
    rotor_inertia: float         # kg*m^2
    rated_velocity: float        # rad/s
    peak_torque: float           # N*m
    torque_constant: float       # N*m/A
    winding_resistance: float    # ohm
    domain_override: OperationDomainTemplate | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("motor.id", "id must be non-empty")
        for name in ("mass", "rotor_inertia", "rated_velocity", "peak_torque",
                     "torque_constant", "winding_resistance"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"motor[{self.id}].{name}", f"{name} > 0 violated (got {value!r})")


@dataclass(frozen=True)
class GearCandidate:
    """One reduction-stage candidate; ratio N multiplies torque, divides speed."""

    ratio: float
    efficiency: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.ratio) and self.ratio > 0):
            raise ValidationError("gear.ratio", f"ratio > 0 violated (got {self.ratio!r})")
        if not (0.0 < self.efficiency <= 1.0):
            raise ValidationError("gear.efficiency", f"efficiency in (0, 1] violated (got {self.efficiency!r})")


_BLOCK_TOKEN = re.compile(r"^(s|d\((\d+),(\d+)\))$")


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """An actuator-joint coupling: invertible map from actuator to joint velocities.

    ``blocks`` keeps the display tokens ("s" / "d(i,j)") for block-built
    couplings and is None for raw matrices.  ``inverse`` is cached; for
    block couplings it is assembled exactly from integer blocks rather than
    factorized numerically.  ``trace_weights[i]`` is the squared norm of row
    i of the inverse, the exact factor by which actuator i's reflected
    inertia enters the trace of the joint-space inertia matrix.
    """

    id: str
    jacobian: np.ndarray
    blocks: tuple[str, ...] | None = None
    inverse: np.ndarray = field(repr=False, default=None)
    det: float = field(repr=False, default=None)
    trace_weights: np.ndarray = field(repr=False, default=None)
    verified: bool = True

    def __post_init__(self):
        mat = np.asarray(self.jacobian, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError(f"coupling[{self.id}].jacobian", "jacobian must be square")
        if not np.all(np.isfinite(mat)):
            raise ValidationError(f"coupling[{self.id}].jacobian", "jacobian entries must be finite")
        if self.inverse is None:
            det = float(np.linalg.det(mat))
            if abs(det) <= MIN_COUPLING_DET:
                raise ValidationError(
                    f"coupling[{self.id}].jacobian", f"jacobian invertible violated (|det|={abs(det):.3e})"
                )
            inv = np.linalg.inv(mat)
            object.__setattr__(self, "det", det)
            object.__setattr__(self, "inverse", inv)
            object.__setattr__(self, "verified", False)
        inv = np.asarray(self.inverse, dtype=float)
        weights = (inv * inv).sum(axis=1)
        mat.setflags(write=False)
        inv.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "jacobian", mat)
        object.__setattr__(self, "inverse", inv)
        object.__setattr__(self, "trace_weights", weights)

    def __eq__(self, other):
        return (
            isinstance(other, CouplingSpec)
            and self.id == other.id
            and np.array_equal(self.jacobian, other.jacobian)
            and self.blocks == other.blocks
        )

    @property
    def size(self) -> int:
        return self.jacobian.shape[0]


def parse_block_token(token: str, position: int):
    """Parse one block token; ``position`` is the 1-based next joint index."""
    m = _BLOCK_TOKEN.match(token.replace(" ", ""))
    if not m:
        raise ValidationError(f"couplings[].blocks[{position}]", f"unrecognized block token {token!r}")
    if m.group(1) == "s":
        return ("s", (position,))
    i, j = int(m.group(2)), int(m.group(3))
    if j != i + 1:
        raise ValidationError(
            f"couplings[].blocks[{position}]",
            f"differential blocks span two consecutive joints, got d({i},{j})",
        )
    if i != position:
        raise ValidationError(
            f"couplings[].blocks[{position}]",
            f"expected block starting at joint {position}, got d({i},{j})",
        )
    return (f"d({i},{j})", (i, j))


def build_coupling(blocks, coupling_id: str | None = None) -> CouplingSpec:
    """Assemble a block-diagonal coupling from "s" / "d(i,j)" tokens.

    Blocks must tile the joints 1..n consecutively with no gap or overlap.
    The jacobian, its inverse, and its determinant are assembled exactly
    blockwise; names default to "serial" or "par-<ij>[-<ij>...]".
    """

    tokens, spans = [], []
    position = 1
    for token in blocks:
        canon, span = parse_block_token(str(token), position)
        tokens.append(canon)
        spans.append(span)
        position += len(span)
    n = position - 1
    if n == 0:
        raise ValidationError("couplings[].blocks", "coupling needs at least one block")

    jac = np.zeros((n, n))
    inv = np.zeros((n, n))
    det = Fraction(1)
    for span in spans:
        a = span[0] - 1
        if len(span) == 1:
            jac[a, a] = 1.0
            inv[a, a] = 1.0
        else:
            jac[a : a + 2, a : a + 2] = DIFFERENTIAL_BLOCK
            inv[a : a + 2, a : a + 2] = DIFFERENTIAL_BLOCK_INVERSE
            det *= Fraction(1, 2)

    diff_spans = [s for s in spans if len(s) == 2]
    if coupling_id is None:
        coupling_id = "serial" if not diff_spans else "par-" + "-".join(f"{i}{j}" for i, j in diff_spans)
    return CouplingSpec(
        id=coupling_id, jacobian=jac, blocks=tuple(tokens), inverse=inv, det=float(det), verified=True
    )


def raw_coupling(matrix, coupling_id: str) -> CouplingSpec:
    """Escape hatch: accept an arbitrary invertible matrix, flagged unverified."""
    return CouplingSpec(id=coupling_id, jacobian=np.asarray(matrix, dtype=float), blocks=None)


def table_couplings(n_joints: int = 5) -> list[CouplingSpec]:
    """All block couplings for ``n_joints`` joints: serial plus every way of
    placing non-overlapping differential pairs on consecutive joints."""

    results = []

    def extend(position: int, blocks: list[str]):
        if position > n_joints:
            results.append(build_coupling(blocks))
            return
        extend(position + 1, blocks + ["s"])
        if position + 1 <= n_joints:
            extend(position + 2, blocks + [f"d({position},{position + 1})"])

    extend(1, [])
    results.sort(key=lambda c: (c.id != "serial", c.id))
    return results


def operation_polygon(motor: MotorSpec, template: OperationDomainTemplate) -> ConvexPolygon:
    """The motor's torque-velocity operation domain under ``template``.

    Uses the motor's own override template when present.
    """
    tpl = motor.domain_override or template
    return tpl.polygon(motor.rated_velocity, motor.peak_torque)


# ---------------------------------------------------------------------------
# Library
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Library:
    """Validated bundle of motor, gear, and coupling candidates."""

    motors: tuple[MotorSpec, ...]
    gears: tuple[GearCandidate, ...]
    couplings: tuple[CouplingSpec, ...]
    domain_template: OperationDomainTemplate

    def __post_init__(self):
        object.__setattr__(self, "motors", tuple(self.motors))
        object.__setattr__(self, "gears", tuple(self.gears))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if not self.motors:
            raise ValidationError("motors", "library needs at least one motor")
        if not self.gears:
            raise ValidationError("gears", "library needs at least one gear ratio")
        if not self.couplings:
            raise ValidationError("couplings", "library needs at least one coupling")
        ids = [m.id for m in self.motors]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError("motors", f"motor ids must be unique (duplicate {dup!r})")
        cids = [c.id for c in self.couplings]
        if len(set(cids)) != len(cids):
            dup = next(i for i in cids if cids.count(i) > 1)
            raise ValidationError("couplings", f"coupling ids must be unique (duplicate {dup!r})")
        sizes = {c.size for c in self.couplings}
        if len(sizes) != 1:
            raise ValidationError("couplings", f"couplings disagree on joint count: {sorted(sizes)}")

    def __eq__(self, other):
        return (
            isinstance(other, Library)
            and self.motors == other.motors
            and self.gears == other.gears
            and self.couplings == other.couplings
            and self.domain_template == other.domain_template
        )

    @property
    def joint_count(self) -> int:
        return self.couplings[0].size

    def motor(self, motor_id: str) -> MotorSpec:
        for m in self.motors:
            if m.id == motor_id:
                return m
        raise KeyError(f"no motor {motor_id!r} in library")

    def coupling(self, coupling_id: str) -> CouplingSpec:
        for c in self.couplings:
            if c.id == coupling_id:
                return c
        raise KeyError(f"no coupling {coupling_id!r} in library")

    def polygon_for(self, motor: MotorSpec) -> ConvexPolygon:
        return operation_polygon(motor, self.domain_template)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------
#
# A library file is a YAML document with top-level keys ``motors``, ``gears``,
# ``couplings``, ``domain_template``.  Motor keys carry their unit in the
# suffix; the canonical SI spellings are written by save_library and a few
# common datasheet units are accepted on load:
#
#   mass_kg | mass_g
#   rotor_inertia_kgm2 | rotor_inertia_gm2 | rotor_inertia_gcm2
#   rated_velocity_rad_s | rated_velocity_rpm
#   peak_torque_Nm
#   torque_constant_Nm_A
#   winding_resistance_ohm | winding_resistance_mohm
#
# Couplings are block token lists like ["d(1,2)", "s", "s", "s"], optionally
# wrapped as {id: ..., blocks: [...]} or, for the unverified escape hatch,
# {id: ..., matrix: [[...], ...]}.

_MOTOR_UNIT_KEYS = {
    "mass": {"mass_kg": 1.0, "mass_g": 1e-3},
    "rotor_inertia": {"rotor_inertia_kgm2": 1.0, "rotor_inertia_gm2": 1e-3, "rotor_inertia_gcm2": 1e-7},
    "rated_velocity": {"rated_velocity_rad_s": 1.0, "rated_velocity_rpm": math.pi / 30.0},
    "peak_torque": {"peak_torque_Nm": 1.0},
    "torque_constant": {"torque_constant_Nm_A": 1.0},
    "winding_resistance": {"winding_resistance_ohm": 1.0, "winding_resistance_mohm": 1e-3},
}


def _motor_from_entry(entry: dict, index: int) -> MotorSpec:
    path = f"motors[{index}]"
    if not isinstance(entry, dict):
        raise ValidationError(path, "motor entry must be a mapping")
    if "id" not in entry:
        raise ValidationError(f"{path}.id", "missing id")
    values = {"id": str(entry["id"])}
    for attr, unit_keys in _MOTOR_UNIT_KEYS.items():
        present = [k for k in unit_keys if k in entry]
        if not present:
            raise ValidationError(f"{path}.{next(iter(unit_keys))}", f"missing {attr}")
        if len(present) > 1:
            raise ValidationError(f"{path}.{present[1]}", f"{attr} given in more than one unit")
        raw = entry[present[0]]
        if not isinstance(raw, (int, float)):
            raise ValidationError(f"{path}.{present[0]}", f"expected a number, got {raw!r}")
        values[attr] = float(raw) * unit_keys[present[0]]
    override = None
    if "alpha" in entry or "beta" in entry:
        if not ("alpha" in entry and "beta" in entry):
            raise ValidationError(f"{path}.alpha", "per-motor override needs both alpha and beta")
        override = OperationDomainTemplate(tuple(entry["alpha"]), tuple(entry["beta"]))
    try:
        return MotorSpec(domain_override=override, **values)
    except ValidationError as exc:
        raise ValidationError(f"{path}.{exc.field_path.split('.', 1)[-1]}", exc.args[0].split(": ", 1)[-1]) from exc


def _gear_from_entry(entry, index: int) -> GearCandidate:
    path = f"gears[{index}]"
    if isinstance(entry, (int, float)):
        return GearCandidate(ratio=float(entry))
    if isinstance(entry, dict):
        if "ratio" not in entry:
            raise ValidationError(f"{path}.ratio", "missing ratio")
        return GearCandidate(ratio=float(entry["ratio"]), efficiency=float(entry.get("efficiency", 1.0)))
    raise ValidationError(path, f"gear entry must be a number or mapping, got {entry!r}")


def _coupling_from_entry(entry, index: int) -> CouplingSpec:
    path = f"couplings[{index}]"
    try:
        if isinstance(entry, list):
            return build_coupling(entry)
        if isinstance(entry, dict) and "blocks" in entry:
            return build_coupling(entry["blocks"], coupling_id=entry.get("id"))
        if isinstance(entry, dict) and "matrix" in entry:
            if "id" not in entry:
                raise ValidationError(f"{path}.id", "raw-matrix couplings need an explicit id")
            return raw_coupling(entry["matrix"], coupling_id=str(entry["id"]))
    except ValidationError as exc:
        tail = exc.field_path.split(".", 1)[-1] if "." in exc.field_path else "blocks"
        raise ValidationError(f"{path}.{tail}", exc.args[0].split(": ", 1)[-1]) from exc
    raise ValidationError(path, "coupling entry must be a block list, {blocks: ...}, or {matrix: ...}")


def library_from_dict(doc: dict) -> Library:
    if not isinstance(doc, dict):
        raise ParseError("library document must be a mapping")
    for key in ("motors", "gears", "couplings", "domain_template"):
        if key not in doc:
            raise ValidationError(key, "missing top-level section")
    tpl_doc = doc["domain_template"]
    if not isinstance(tpl_doc, dict) or "alpha" not in tpl_doc or "beta" not in tpl_doc:
        raise ValidationError("domain_template", "needs alpha and beta coefficient lists")
    template = OperationDomainTemplate(tuple(tpl_doc["alpha"]), tuple(tpl_doc["beta"]))
    motors = tuple(_motor_from_entry(e, i) for i, e in enumerate(doc["motors"]))
    gears = tuple(_gear_from_entry(e, i) for i, e in enumerate(doc["gears"]))
    couplings = tuple(_coupling_from_entry(e, i) for i, e in enumerate(doc["couplings"]))
    return Library(motors=motors, gears=gears, couplings=couplings, domain_template=template)


def library_to_dict(lib: Library) -> dict:
    motors = []
    for m in lib.motors:
        entry = {
            "id": m.id,
            "mass_kg": m.mass,
            "rotor_inertia_kgm2": m.rotor_inertia,
            "rated_velocity_rad_s": m.rated_velocity,
            "peak_torque_Nm": m.peak_torque,
            "torque_constant_Nm_A": m.torque_constant,
            "winding_resistance_ohm": m.winding_resistance,
        }
        if m.domain_override is not None:
            entry["alpha"] = list(m.domain_override.alpha)
            entry["beta"] = list(m.domain_override.beta)
        motors.append(entry)
    gears = [
        g.ratio if g.efficiency == 1.0 else {"ratio": g.ratio, "efficiency": g.efficiency}
        for g in lib.gears
    ]
    couplings = []
    for c in lib.couplings:
        if c.blocks is not None:
            couplings.append({"id": c.id, "blocks": list(c.blocks)})
        else:
            couplings.append({"id": c.id, "matrix": [[float(x) for x in row] for row in c.jacobian]})
    return {
        "motors": motors,
        "gears": gears,
        "couplings": couplings,
        "domain_template": {
            "alpha": list(lib.domain_template.alpha),
            "beta": list(lib.domain_template.beta),
        },
    }


class _ExactFloatDumper(yaml.SafeDumper):
    pass


def _float_representer(dumper, value):
    # repr() is the shortest string that round-trips the double exactly.
    return dumper.represent_scalar("tag:yaml.org,2002:float", repr(float(value)))


_ExactFloatDumper.add_representer(float, _float_representer)


def load_library(path) -> Library:
    """Load and validate a library file. Raises ParseError / ValidationError."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return library_from_dict(doc)


def save_library(lib: Library, path) -> None:
    """Write the canonical SI form; load_library(save_library(lib)) == lib."""
    Path(path).write_text(
        yaml.dump(library_to_dict(lib), Dumper=_ExactFloatDumper, sort_keys=False, default_flow_style=None)
    )
