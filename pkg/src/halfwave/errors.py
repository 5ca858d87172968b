"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line harness can map it
to a process status without a lookup table.
"""


class HalfwaveError(Exception):
    exit_code = 1

    def to_json(self):
        return {"error": type(self).__name__, "message": str(self)}


class ConfigurationError(HalfwaveError, ValueError):
    """Mismatched grids/sectors, bad step sizes, unknown config keys."""


class DomainError(HalfwaveError, ValueError):
    """Argument outside the admissible range (s <= 0, |b| too large, ...)."""


class NumericError(HalfwaveError, ArithmeticError):
    def __init__(self, message, mode_index=None):
        super().__init__(message)
        self.mode_index = mode_index


class IterationError(HalfwaveError, RuntimeError):
    """An iterative solver stagnated; ``history`` holds its residuals."""

    exit_code = 2

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])

    def to_json(self):
        out = super().to_json()
        out["history"] = [float(h) for h in self.history[-20:]]
        return out


class IterationDivergedError(IterationError):
    pass


class SpuriousSolutionError(HalfwaveError, RuntimeError):
    exit_code = 2


class SolvabilityError(HalfwaveError, ValueError):
    """Right-hand side not orthogonal to the kernel of the operator."""

    def __init__(self, message, inner_product=None):
        super().__init__(message)
        self.inner_product = inner_product


class ExpansionInconsistencyError(SolvabilityError):
    def __init__(self, message, order=None, inner_product=None):
        super().__init__(message, inner_product)
        self.order = order


class StencilError(HalfwaveError, RuntimeError):
    pass


class BasinError(HalfwaveError, RuntimeError):
    """Newton iteration for the modulation parameters left its basin."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConditioningError(BasinError):
    pass


class ToleranceError(HalfwaveError, RuntimeError):
    pass


class FitError(HalfwaveError, ValueError):
    pass


class ConstructionError(HalfwaveError, RuntimeError):
    pass


class FormatError(HalfwaveError, ValueError):
    exit_code = 3


class MissingArtifactError(HalfwaveError, FileNotFoundError):
    """A pipeline stage needs the output of an earlier stage."""

    exit_code = 4


class EvolutionError(HalfwaveError, RuntimeError):
    exit_code = 5


class ModulationError(HalfwaveError, RuntimeError):
    exit_code = 6


class DiagnosticsError(HalfwaveError, RuntimeError):
    exit_code = 7
