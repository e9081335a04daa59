"""Drivetrain math: reflected inertia, actuator-joint projections, feasibility.

Velocity convention: the coupling matrix C maps actuator-space to
joint-space velocities, q_dot = C @ psi_dot.  With gear ratios N (diagonal,
motor-to-actuator), a joint-space demand (w_j, tau_j) pulls back to the
motor side as

    w_m   = N @ C^-1 @ w_j
    tau_m = N^-1 @ C^T @ tau_j

which conserves mechanical power exactly: tau_m . w_m = tau_j . w_j.

Reflected inertia: a rotor inertia I_r behind ratio N contributes I_r * N^2
on the actuator axis; the joint-space inertia matrix is
C^-T @ diag(I_a) @ C^-1 and its trace is what the optimizer minimizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import ConvexPolygon, CouplingSpec, GearCandidate, Library, MotorSpec
from .errors import DimensionError

# Absolute slack for operation-domain containment tests.
CONTAINMENT_SLACK = 1e-9


def reflected_inertia(rotor_inertia: float, ratio: float) -> float:
    """Rotor inertia seen on the actuator axis behind a reduction ``ratio``."""
    return rotor_inertia * ratio * ratio


def project_velocities(coupling: CouplingSpec, ratios: np.ndarray, joint_velocities: np.ndarray) -> np.ndarray:
    """Motor velocities for joint velocities of shape (..., n)."""
    w = np.asarray(joint_velocities, dtype=float)
    _check_width(coupling, w)
    return (w @ coupling.inverse.T) * np.asarray(ratios, dtype=float)


def project_torques(coupling: CouplingSpec, ratios: np.ndarray, joint_torques: np.ndarray) -> np.ndarray:
    """Motor torques for joint torques of shape (..., n)."""
    tau = np.asarray(joint_torques, dtype=float)
    _check_width(coupling, tau)
    return (tau @ coupling.jacobian) / np.asarray(ratios, dtype=float)


def joint_torques_from_motor(coupling: CouplingSpec, ratios: np.ndarray, motor_torques: np.ndarray) -> np.ndarray:
    """Forward map: joint torques produced by motor torques, tau_j = C^-T N tau_m."""
    tau = np.asarray(motor_torques, dtype=float)
    _check_width(coupling, tau)
    return (tau * np.asarray(ratios, dtype=float)) @ coupling.inverse


def joint_space_inertia(coupling: CouplingSpec, actuator_inertias: np.ndarray) -> np.ndarray:
    """Joint-space reflected inertia matrix C^-T @ diag(I_a) @ C^-1."""
    inertias = np.asarray(actuator_inertias, dtype=float)
    if inertias.shape != (coupling.size,):
        raise DimensionError(
            f"expected {coupling.size} actuator inertias, got shape {inertias.shape}"
        )
    inv = coupling.inverse
    return inv.T @ (inertias[:, None] * inv)

def inertia_trace(coupling: CouplingSpec, actuator_inertias: np.ndarray) -> float:
    # trace(C^-T H C^-1) = sum_i I_i * ||row_i(C^-1)||^2, so no matrix build.
    return float(np.dot(np.asarray(actuator_inertias, dtype=float), coupling.trace_weights))


def mechanical_power(velocities: np.ndarray, torques: np.ndarray) -> np.ndarray:
    """Instantaneous power sum(tau * w) along the last axis."""
    return np.einsum("...i,...i->...", np.asarray(velocities, float), np.asarray(torques, float))


def _check_width(coupling: CouplingSpec, arr: np.ndarray) -> None:
    if arr.shape[-1] != coupling.size:
        raise DimensionError(
            f"coupling {coupling.id!r} is {coupling.size}-dof, data has width {arr.shape[-1]}"
        )


@dataclass(frozen=True)
class Design:
    """A complete drivetrain selection: one motor and gear per actuator, one coupling."""

    coupling: CouplingSpec
    motors: tuple[MotorSpec, ...]
    gears: tuple[GearCandidate, ...]

    def __post_init__(self):
        object.__setattr__(self, "motors", tuple(self.motors))
        object.__setattr__(self, "gears", tuple(self.gears))
        n = self.coupling.size
        if len(self.motors) != n or len(self.gears) != n:
            raise DimensionError(
                f"coupling {self.coupling.id!r} needs {n} motor/gear pairs, "
                f"got {len(self.motors)} motors and {len(self.gears)} gears"
            )

    @property
    def size(self) -> int:
        return self.coupling.size

    @property
    def ratios(self) -> np.ndarray:
        return np.array([g.ratio for g in self.gears])

    @property
    def efficiencies(self) -> np.ndarray:
        return np.array([g.efficiency for g in self.gears])

    @property
    def actuator_inertias(self) -> np.ndarray:
        """Reflected inertia per actuator axis."""
        return np.array([reflected_inertia(m.rotor_inertia, g.ratio) for m, g in zip(self.motors, self.gears)])

    @property
    def total_motor_mass(self) -> float:
        return float(sum(m.mass for m in self.motors))

    def joint_inertia(self) -> np.ndarray:
        return joint_space_inertia(self.coupling, self.actuator_inertias)

    def inertia_trace(self) -> float:
        return inertia_trace(self.coupling, self.actuator_inertias)

    def motor_velocities(self, joint_velocities: np.ndarray) -> np.ndarray:
        return project_velocities(self.coupling, self.ratios, joint_velocities)

    def motor_torques(self, joint_torques: np.ndarray) -> np.ndarray:
        return project_torques(self.coupling, self.ratios, joint_torques)

    def describe(self) -> str:
        rows = [
            f"  actuator {i + 1}: motor {m.id} ({m.mass:.3f} kg), N = {g.ratio:g}"
            for i, (m, g) in enumerate(zip(self.motors, self.gears))
        ]
        return "\n".join([f"coupling {self.coupling.id}"] + rows)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of testing a design against a joint-space demand history.

    ``margins`` has shape (T, n): per sample and actuator, the slack to the
    nearest operation-domain edge (negative = saturated).  ``violations``
    lists (sample, actuator) pairs outside the domain.
    """

    feasible: bool
    margins: np.ndarray
    violations: tuple[tuple[int, int], ...]

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())

    def saturated_actuators(self) -> tuple[int, ...]:
        """0-based actuator indices that leave the domain anywhere in the history."""
        return tuple(sorted({a for _, a in self.violations}))


def effective_motor_torques(design: Design, joint_torques: np.ndarray) -> np.ndarray:
    """Motor torques with gear losses charged against the motor.

    The gearbox dissipates a fraction (1 - eta), so the motor must supply
    tau_m / eta to deliver tau_m downstream; only feasibility testing uses
    this, inertia and winding-loss accounting use the ideal projection.
    """
    return design.motor_torques(joint_torques) / design.efficiencies


def check_feasibility(
    design: Design,
    joint_velocities: np.ndarray,
    joint_torques: np.ndarray,
    polygons: list[ConvexPolygon] | None = None,
    library: Library | None = None,
    margin: float = 0.0,
    slack: float = CONTAINMENT_SLACK,
) -> FeasibilityReport:
    """Test every (velocity, torque) sample of every motor against its domain.

    ``polygons`` gives one domain per actuator; alternatively pass ``library``
    to derive them from its template.  ``margin`` shrinks each domain by that
    fraction (a designer's safety reserve).
    """
    if polygons is None:
        if library is None:
            raise ValueError("need polygons or a library to test against")
        polygons = [library.polygon_for(m) for m in design.motors]
    if margin:
        polygons = [p.scaled(1.0 - margin) for p in polygons]
    if len(polygons) != design.size:
        raise DimensionError(f"expected {design.size} polygons, got {len(polygons)}")

    w_m = design.motor_velocities(np.atleast_2d(joint_velocities))
    tau_m = effective_motor_torques(design, np.atleast_2d(joint_torques))
    margins = np.empty(w_m.shape)
    for i, poly in enumerate(polygons):
        pts = np.stack([w_m[:, i], tau_m[:, i]], axis=1)
        margins[:, i] = poly.margins(pts).min(axis=1)
    bad = np.argwhere(margins < -slack)
    return FeasibilityReport(
        feasible=bad.size == 0,
        margins=margins,
        violations=tuple((int(t), int(a)) for t, a in bad),
    )
