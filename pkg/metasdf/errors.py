"""
Exception hierarchy for MetaSDF Shape Lab
"""
from typing import Any, Dict, Optional, Sequence, Tuple


class MetaSdfError(Exception):
    """Base class for all errors raised by the package"""


class ConfigError(MetaSdfError):
    """Invalid configuration or command-line usage (exit code 2)"""


class AutodiffError(MetaSdfError):
    """Misuse of the differentiation engine"""


class ShapeMismatchError(AutodiffError):
    """Operand shapes do not conform for an op"""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        message = f"{op}: incompatible shapes {self.shapes}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class NonFiniteError(MetaSdfError):
    """A loss or prediction became NaN/inf"""

    def __init__(self, message: str, step: Optional[int] = None, locations: Any = None):
        self.step = step
        self.locations = locations
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class SdfDataError(MetaSdfError):
    """Dataset construction or sampling failure"""


class GeometryError(MetaSdfError):
    """Level-set extraction or surface sampling failure"""


class LossError(MetaSdfError):
    """Invalid loss inputs"""


class DivergenceError(MetaSdfError):
    """Training loss exceeded the divergence limit"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class CheckpointError(MetaSdfError):
    """Unreadable checkpoint or checkpoint/method mismatch"""
