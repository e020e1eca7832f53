"""Exception types shared across the package.

Every error raised by the library derives from :class:`QuasilinError` so that
callers (and the CLI) can map failures to stable machine-readable codes.
"""


class QuasilinError(Exception):
    """Base class for all library errors."""

    code = "error"


class DimensionError(QuasilinError):
    """Array arguments are dimensionally inconsistent."""

    code = "dimension_mismatch"


class InadmissibleConstantsError(QuasilinError):
    """Structure constants admit no quantum state (negative norm radicand)."""

    code = "inadmissible_constants"


class NotHurwitzError(QuasilinError):
    """A drift matrix required to be Hurwitz is not."""

    code = "not_hurwitz"


class MeasurementError(QuasilinError):
    """Measurement matrix violates rank or self-commutation requirements."""

    code = "invalid_measurement"


class DesignInfeasibleError(QuasilinError):
    """No stabilizing Riccati solution exists for the requested design."""

    code = "design_infeasible"


class SolverDisagreementError(QuasilinError):
    """Two independent solver paths produced inconsistent results."""

    code = "solver_disagreement"


class StiffnessError(QuasilinError):
    """Adaptive integrator step size underflowed."""

    code = "stiff_problem"


class ConfigError(QuasilinError):
    """Scenario configuration could not be parsed or is inconsistent."""

    code = "config_error"
