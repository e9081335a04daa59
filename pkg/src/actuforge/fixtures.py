"""Reference fixtures: a 10-motor scaled library, two leg tasks, and random
instance generators for property tests.

The motor family is synthetic but physically shaped: all ratings follow
power-law scalings of the motor mass (torque grows faster than linearly,
speed falls, rotor inertia grows superlinearly), rounded to datasheet-like
precision.  Masses are gram-exact on purpose, which keeps the gram DP
applicable.  None of these numbers are vendor data; they are declared
fixtures for tests, demos, and the bundled study protocol.
"""

from __future__ import annotations

import numpy as np

from .components import (
    GearCandidate,
    Library,
    MotorSpec,
    OperationDomainTemplate,
    build_coupling,
    table_couplings,
)
from .optimizer import DesignProblem, DesignRule
from .tasking import Trajectory, concatenate, synthesize_harmonic

# Domain template: asymmetric velocity range, symmetric transient torque.
TEMPLATE_ALPHA = (1.5, -2.5, -2.5, 1.5)
TEMPLATE_BETA = (1.2, 1.2, -1.2, -1.2)

# Fixture motor masses in grams.
MOTOR_MASSES_G = (200, 278, 356, 433, 511, 589, 667, 744, 822, 900)

GEAR_RATIOS = tuple(float(n) for n in range(1, 13))


def reference_motor(mass_g: int) -> MotorSpec:
    """One fixture motor from its mass via the family's scaling laws."""
    m = mass_g / 1000.0
    return MotorSpec(
        id=f"m{mass_g}",
        mass=m,
        rotor_inertia=round(8e-5 * m ** (5.0 / 3.0), 9),
        rated_velocity=round(160.0 * m ** (-1.0 / 3.0), 1),
        peak_torque=round(14.0 * m ** (4.0 / 3.0), 2),
        torque_constant=round(0.14 * m ** (2.0 / 3.0), 4),
        winding_resistance=round(0.25 * m ** (-2.0 / 3.0), 3),
    )


def reference_library() -> Library:
    """10 motors, 12 integer gear ratios, all 8 block couplings on 5 joints."""
    return Library(
        motors=tuple(reference_motor(g) for g in MOTOR_MASSES_G),
        gears=tuple(GearCandidate(ratio=r) for r in GEAR_RATIOS),
        couplings=tuple(table_couplings(5)),
        domain_template=OperationDomainTemplate(TEMPLATE_ALPHA, TEMPLATE_BETA),
    )


# Task amplitudes per joint (hip-yaw, hip-roll, hip-pitch, knee, ankle).
WALKING_VELOCITY_AMPLITUDES = (3.0, 4.0, 16.0, -20.0, 8.0)
WALKING_TORQUE_AMPLITUDES = (10.0, 26.0, 58.0, -70.0, 32.0)
SNATCH_VELOCITY_AMPLITUDES = (0.0, 0.0, 2.5, -3.0, 1.5)
SNATCH_TORQUE_AMPLITUDES = (0.0, 0.0, 90.0, -104.0, 45.0)


def walking_task() -> Trajectory:
    """Fast-swing gait burst: 150 samples at 1 kHz, one half stride."""
    return synthesize_harmonic(
        WALKING_VELOCITY_AMPLITUDES,
        WALKING_TORQUE_AMPLITUDES,
        frequency_hz=1.0 / 0.3,
        sample_count=150,
        dt=1e-3,
        name="walking",
    )


def snatch_task() -> Trajectory:
    """Slow heavy lift dominated by sagittal torque: 3600 samples at 1 kHz."""
    return synthesize_harmonic(
        SNATCH_VELOCITY_AMPLITUDES,
        SNATCH_TORQUE_AMPLITUDES,
        frequency_hz=1.0 / 3.6,
        sample_count=3600,
        dt=1e-3,
        name="snatch",
    )


def reference_tasks() -> Trajectory:
    """The two-task history used by the bundled study protocol (T = 3750)."""
    return concatenate([walking_task(), snatch_task()])


def reference_budgets() -> tuple[float, ...]:
    """25 budgets, 2.2 kg to 4.0 kg inclusive at 0.075 kg steps."""
    return tuple(round(2.2 + 0.075 * k, 9) for k in range(25))


# Bent-knee stance used wherever a single probe configuration is needed;
# comfortably away from the straight-leg singularity.
BENT_KNEE_CONFIGURATION = (0.0, 0.0, -0.3, 0.6, -0.3)


# ---------------------------------------------------------------------------
# Random instances for property tests
# ---------------------------------------------------------------------------

def _small_couplings(n: int):
    if n == 1:
        return [build_coupling(["s"])]
    if n == 2:
        return [build_coupling(["s", "s"]), build_coupling(["d(1,2)"])]
    return [
        build_coupling(["s", "s", "s"]),
        build_coupling(["d(1,2)", "s"]),
        build_coupling(["s", "d(2,3)"]),
    ]


def random_library(rng: np.random.Generator, joint_count: int,
                   motor_count: int, gear_count: int) -> Library:
    motors = []
    for i in range(motor_count):
        mass_g = int(rng.integers(150, 1200))
        m = mass_g / 1000.0
        scale = float(rng.uniform(0.6, 1.6))
        motors.append(MotorSpec(
            id=f"r{i}_{mass_g}",
            mass=mass_g / 1000.0,
            rotor_inertia=round(8e-5 * scale * m ** (5.0 / 3.0), 10),
            rated_velocity=round(160.0 * scale * m ** (-1.0 / 3.0), 1),
            peak_torque=round(14.0 * scale * m ** (4.0 / 3.0), 2),
            torque_constant=round(0.14 * m ** (2.0 / 3.0), 4),
            winding_resistance=round(0.25 * m ** (-2.0 / 3.0), 3),
        ))
    ratios = sorted(rng.choice(np.arange(1, 15), size=gear_count, replace=False).tolist())
    return Library(
        motors=tuple(motors),
        gears=tuple(GearCandidate(ratio=float(r)) for r in ratios),
        couplings=tuple(_small_couplings(joint_count)),
        domain_template=OperationDomainTemplate(TEMPLATE_ALPHA, TEMPLATE_BETA),
    )


def random_problem(rng: np.random.Generator, with_budget: bool = True) -> DesignProblem:
    """A small random instance solvable by exhaustive enumeration.

    At most 3 actuators, 4 motors, 4 gears; every block coupling shape up to
    3 joints appears.  Amplitudes are drawn so instances are usually but not
    always feasible; budgets sit near the middle of the attainable mass
    range so the constraint actually binds.
    """
    joint_count = int(rng.integers(1, 4))
    library = random_library(rng, joint_count,
                             motor_count=int(rng.integers(2, 5)),
                             gear_count=int(rng.integers(2, 5)))
    coupling = library.couplings[int(rng.integers(len(library.couplings)))]
    w_hat = rng.uniform(-25.0, 25.0, joint_count)
    tau_hat = rng.uniform(-60.0, 60.0, joint_count)
    tasks = synthesize_harmonic(w_hat, tau_hat, frequency_hz=2.0,
                                sample_count=int(rng.integers(20, 60)), dt=1e-3)
    rules = ()
    if with_budget:
        masses = sorted(m.mass for m in library.motors)
        lo = joint_count * masses[0]
        hi = joint_count * masses[-1]
        rules = (DesignRule.mass_budget(round(float(rng.uniform(lo, hi * 1.05)), 3)),)
    return DesignProblem(library=library, tasks=tasks, coupling=coupling, rules=rules)
