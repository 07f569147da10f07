class LtrNoiseError(Exception):
    """Base class for every error raised by the toolkit"""


class InputError(LtrNoiseError, ValueError):
    """A precondition on an argument was violated"""


class LetorParseError(InputError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class UnsupportedOperationError(LtrNoiseError):
    pass


class MetricUndefinedError(LtrNoiseError):
    pass


class RiskUndefinedError(LtrNoiseError):
    pass


class DegenerateFitError(LtrNoiseError):
    pass


class TrainingDivergedError(LtrNoiseError):
    def __init__(self, message: str, history=None):
        self.history = list(history or [])
        super().__init__(message)


class GridSearchError(LtrNoiseError):
    def __init__(self, message: str, cells=None):
        # cells: list of (learning_rate, weight_decay, diagnostic)
        self.cells = list(cells or [])
        super().__init__(message)
