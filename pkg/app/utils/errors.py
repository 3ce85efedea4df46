"""
Error hierarchy shared by the library and the command-line surface
"""
from typing import Any, Dict, Optional


class UnwrapError(Exception):
    """Base error carrying a machine code and the CLI exit code"""

    code = "unwrap_error"
    exit_code = 1

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable error object written to the error stream"""
        data: Dict[str, Any] = {"code": self.code, "message": self.detail}
        data.update(self.context)
        return {"type": "error", "data": data}


class ShapeError(UnwrapError):
    code = "shape_error"


class InputError(UnwrapError):
    code = "input_error"


class PreconditionError(UnwrapError):
    code = "precondition_violated"


class CapExceededError(UnwrapError):
    code = "cap_exceeded"

    def __init__(self, detail: str, cap: Optional[int] = None, **context: Any):
        super().__init__(detail, cap=cap, **context)


class ModelParseError(UnwrapError):
    code = "model_parse_error"


class ModelVersionError(UnwrapError):
    code = "model_version_error"


class ModelValueError(UnwrapError):
    code = "model_value_error"


class InvariantViolation(UnwrapError):
    code = "invariant_violation"
    exit_code = 2
