from twins.exceptions import ErrorCode

# Error message mapping
ERROR_MESSAGES = {
    # System level errors (10000-10099)
    ErrorCode.INTERNAL_ERROR: "Internal server error",
    ErrorCode.INVALID_PARAMETERS: "Invalid parameters",
    ErrorCode.INVALID_STATE: "Operation not allowed in the current state",

    # Device model errors (10100-10199)
    ErrorCode.UNKNOWN_CLASS: "Unknown domain class",
    ErrorCode.UNKNOWN_PROPERTY: "Unknown property",
    ErrorCode.STRUCTURAL_MISMATCH: "Instance does not conform to the device schema",
    ErrorCode.CONSTRAINT_VIOLATION: "Constraint violation",

    # Instance factory errors (10200-10299)
    ErrorCode.MULTIPLICITY_ERROR: "Association multiplicity out of bounds",
    ErrorCode.PARSE_ERROR: "Input is not valid JSON",
    ErrorCode.DUPLICATE_SERIAL: "Duplicate serial number",

    # Behavior engine errors (10300-10399)
    ErrorCode.ACTION_FAILURE: "State entry action failed",
    ErrorCode.NO_ACTIVE_PLAN: "No active medication plan",
    ErrorCode.EMPTY_LOG: "Execution log contains no records",
    ErrorCode.MALFORMED_RECORD: "Malformed execution log record",

    # Gateway errors (10400-10499)
    ErrorCode.ROUTE_NOT_FOUND: "Route not found",
    ErrorCode.BIND_FAILURE: "Could not bind server address",
    ErrorCode.DEVICE_UNREACHABLE: "Physical device unreachable",
    ErrorCode.ENDPOINT_UNREACHABLE: "Endpoint unreachable",
    ErrorCode.TARGET_NOT_FOUND: "Addressed object does not exist",
    ErrorCode.UNSUPPORTED_OPERATION: "Operation not supported on this route",
    ErrorCode.DEVICE_BUSY: "Request cannot be handled at the moment",

    # Fidelity errors (10500-10599)
    ErrorCode.EMPTY_TRACE: "Trace is empty",
    ErrorCode.TOO_FEW_PAIRS: "Too few non-zero pairs for the signed-rank test",
}


def get_error_message(error_code: ErrorCode, default_message: str = None) -> str:
    """
    Get error message for error code

    Args:
        error_code: Error code
        default_message: Default message to use if error code is not defined

    Returns:
        str: Error message
    """
    return ERROR_MESSAGES.get(error_code, default_message or f"Unknown error: {error_code}")
