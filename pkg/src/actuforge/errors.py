"""Exception hierarchy shared across the toolkit."""


class ActuforgeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ActuforgeError):
    """A file could not be parsed as the documented format."""


class ValidationError(ActuforgeError):
    """An entity violates one of its invariants.

    ``field_path`` locates the offending entry in machine-readable form,
    e.g. ``motors[3].mass_kg`` or ``couplings[2].jacobian``.
    """

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class DimensionError(ActuforgeError):
    """Operands disagree on joint/actuator dimensionality."""


class DegeneratePolygonError(ActuforgeError):
    """An operation-domain polygon is not strictly convex or has zero area."""


class SingularConfigurationError(ActuforgeError):
    """A kinematic configuration is rank-deficient for the requested analysis."""


class SolverLimitError(ActuforgeError):
    """The exact solver hit its iteration cap before proving optimality."""


class StudyStoreError(ActuforgeError):
    """A persisted study directory is missing, stale, or corrupt."""
