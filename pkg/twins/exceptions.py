from enum import IntEnum
from typing import Optional, List, Any


class ErrorCode(IntEnum):
    # System level errors (10000-10099)
    INTERNAL_ERROR = 10000
    INVALID_PARAMETERS = 10001
    INVALID_STATE = 10002

    # Device model errors (10100-10199)
    UNKNOWN_CLASS = 10100
    UNKNOWN_PROPERTY = 10101
    STRUCTURAL_MISMATCH = 10102
    CONSTRAINT_VIOLATION = 10103

    # Instance factory errors (10200-10299)
    MULTIPLICITY_ERROR = 10200
    PARSE_ERROR = 10201
    DUPLICATE_SERIAL = 10202

    # Behavior engine errors (10300-10399)
    ACTION_FAILURE = 10300
    NO_ACTIVE_PLAN = 10301
    EMPTY_LOG = 10302
    MALFORMED_RECORD = 10303

    # Gateway errors (10400-10499)
    ROUTE_NOT_FOUND = 10400
    BIND_FAILURE = 10401
    DEVICE_UNREACHABLE = 10402
    ENDPOINT_UNREACHABLE = 10403
    TARGET_NOT_FOUND = 10404
    UNSUPPORTED_OPERATION = 10405
    DEVICE_BUSY = 10406

    # Fidelity errors (10500-10599)
    EMPTY_TRACE = 10500
    TOO_FEW_PAIRS = 10501


class TwinException(Exception):
    """Exception raised by every twin framework operation."""

    def __init__(self, error_code: ErrorCode = ErrorCode.INTERNAL_ERROR, message: Optional[str] = None):
        """
        Initialize twin exception

        Args:
            error_code: Error code
            message: Custom error message. If not provided, will use default message for the error code
        """
        from twins.common.error_messages import get_error_message
        self.error_code = error_code
        self.message = message or get_error_message(error_code)
        super().__init__(self.message)

    def __str__(self):
        return f'{self.error_code.name}({self.error_code}): {self.message}'

    def to_dict(self) -> dict:
        return {"error": self.error_code.name, "code": int(self.error_code), "message": self.message}


class ConstraintViolationError(TwinException):
    """Raised when values fail constraint validation; carries every violation found."""

    def __init__(self, violations: List[Any], message: Optional[str] = None):
        self.violations = list(violations)
        ids = ", ".join(sorted({v.constraint_id for v in self.violations}))
        super().__init__(ErrorCode.CONSTRAINT_VIOLATION, message or f"Constraint violation: {ids}")

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["violations"] = [v.model_dump() for v in self.violations]
        return data
