"""Exception hierarchy shared across the package.

Grouped by how the CLI maps them to exit codes: configuration problems,
numerical contract violations, and steady-state degeneracies.
"""


class QuasigibbsError(Exception):
    """Base class for all package errors."""


class GraphError(QuasigibbsError):
    """Invalid interaction graph (self loops, duplicate edges, bad weights)."""


class SupportError(QuasigibbsError):
    """Invalid qubit support (out of range, empty where forbidden)."""


class ShapeError(QuasigibbsError):
    """Operator dimensions inconsistent with the declared support or system size."""


class SizeError(QuasigibbsError):
    """Problem size exceeds what a dense routine is specified to handle."""


class ContractViolationError(QuasigibbsError):
    """An input violates a documented precondition (non-Hermitian, non-density, ...)."""


class RankDeficiencyError(ContractViolationError):
    """A state that must be full rank has an eigenvalue below the floor."""


class DegeneracyError(QuasigibbsError):
    """The steady state is not unique (superoperator co-rank != 1)."""


class NormalizerDegenerateError(ContractViolationError):
    """The single-site sector used for normalization vanishes."""


class InsufficientDataError(QuasigibbsError):
    """Too few usable points for a fit."""


class UnsupportedDissipatorError(ContractViolationError):
    """A dissipator is not a reset channel, so no local frame exists."""


class ThresholdError(QuasigibbsError):
    """Interaction strength is at or above the guaranteed convergence threshold."""


class TermBudgetError(QuasigibbsError):
    """Sparse operator grew past the configured term cap.

    Carries ``k_reached``, the last order that was fully computed.
    """

    def __init__(self, message: str, k_reached: int):
        super().__init__(message)
        self.k_reached = k_reached


class ConfigError(QuasigibbsError):
    """Experiment configuration failed validation; message lists every issue."""


class CsvSchemaError(QuasigibbsError):
    """A CSV file does not carry the expected schema version."""
