"""Exception hierarchy.

Every error class carries an ``exit_code`` used by the command-line entry
point, so each failure category maps to a distinct process status.
"""


class QuakeSurrogateError(Exception):
    exit_code = 1


class ConfigurationError(QuakeSurrogateError, ValueError):
    exit_code = 2


class DomainError(QuakeSurrogateError, ValueError):
    exit_code = 3


class ShapeError(QuakeSurrogateError, ValueError):
    exit_code = 4


class DegenerateError(QuakeSurrogateError, ValueError):
    """Zero variance, zero peak or zero scale where a positive one is needed."""
    exit_code = 5


class SolverError(QuakeSurrogateError, RuntimeError):
    exit_code = 6

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ModelError(QuakeSurrogateError, ValueError):
    exit_code = 7


class CalibrationError(QuakeSurrogateError, RuntimeError):
    exit_code = 8


class TrainingError(QuakeSurrogateError, RuntimeError):
    exit_code = 9

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StateError(QuakeSurrogateError, RuntimeError):
    exit_code = 10


class FormatError(QuakeSurrogateError, ValueError):
    exit_code = 11


class IntegrityError(FormatError):
    exit_code = 12


class CompatibilityError(QuakeSurrogateError, ValueError):
    exit_code = 13


class DependencyError(QuakeSurrogateError, RuntimeError):
    exit_code = 14


class StalenessError(DependencyError):
    exit_code = 15
