# errors.py - exception types raised by the library; the CLI maps them to exit codes


class LayerSepError(Exception):
    """Base class for every error raised by pylayersep"""


class LightFieldError(LayerSepError, ValueError):
    """Invalid light field directory, manifest or view"""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

    def __str__(self):
        message = super().__str__()
        if self.path is not None:
            return f"{message} ({self.path})"
        return message


class ConfigError(LayerSepError, ValueError):
    """Invalid solver or flow configuration"""


class DimensionError(LayerSepError, ValueError):
    """Array shapes or lengths do not conform"""


class ProxError(LayerSepError, ValueError):
    """Invalid input to a proximal operator"""


class FlowError(LayerSepError, ValueError):
    """Invalid correspondence input or no usable views"""


class SynthError(LayerSepError, ValueError):
    """Invalid synthetic scene description"""


class SolverDivergenceError(LayerSepError, RuntimeError):
    """Feasibility residual kept growing inside the inner loop"""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class ObjectiveError(LayerSepError, ArithmeticError):
    """A term of the objective evaluated to a non-finite value"""

    def __init__(self, term, value):
        super().__init__(f"objective term '{term}' is not finite: {value}")
        self.term = term
        self.value = value
