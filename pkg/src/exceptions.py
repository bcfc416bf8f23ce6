"""
Multiview SBM Test - Exceptions
===============================

Every error raised on purpose by the package derives from MultiviewError.
The CLI maps ParameterError and the parse errors to exit code 2 and any
other MultiviewError to exit code 1.
"""

from typing import Any, Dict, Optional


class MultiviewError(ValueError):
    """Base class for domain errors"""


class EdgeListParseError(MultiviewError):
    """Malformed edge-list input"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MatrixParseError(MultiviewError):
    """Malformed numeric matrix input"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        self.row = row
        self.column = column
        if row is not None:
            message = f"row {row}, column {column}: {message}"
        super().__init__(message)


class ParameterError(MultiviewError):
    """An argument or user-supplied parameter is out of range"""


class AlignmentError(MultiviewError):
    """Two data views cannot be put on a common node set"""


class InfeasibleParameterError(MultiviewError):
    """Generator parameters produce probabilities outside [0, 1]"""


class ConvergenceError(MultiviewError):
    """An iterative solver did not reach its tolerance"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class FitError(MultiviewError):
    """A mixture fit produced an unusable state"""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class ReplicateError(MultiviewError):
    """A permutation or simulation replicate failed"""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        self.cause = cause
        super().__init__(f"replicate {index} failed: {type(cause).__name__}: {cause}")
