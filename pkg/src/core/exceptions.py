"""
Custom exception classes for the toolkit.

Every error raised by the library derives from ``FlexEventError`` and carries
a ``context`` dict with the offending values, so the CLI, the API and the MCP
tools can report failures consistently.
"""

from typing import Any, Dict, Optional


class FlexEventError(Exception):
    """
    Base exception class for all toolkit errors.

    Attributes:
        detail: Human readable description
        context: Additional structured information about the failure
    """

    def __init__(self, detail: str, context: Optional[Dict[str, Any]] = None):
        self.detail = detail
        self.context = context or {}
        super().__init__(detail)


class ArgumentError(FlexEventError):
    """
    Raised when an operation receives invalid arguments.

    Examples:
        - Window with t1 >= t2
        - Feature maps with mismatched spatial dimensions
        - Event coordinates outside the sensor
    """

    def __init__(self, detail: str, field: Optional[str] = None, **kwargs):
        super().__init__(detail, context={"field": field, **kwargs})
        self.field = field


class StateError(FlexEventError):
    """
    Raised when an operation needs state that was never recorded.

    Examples:
        - Requesting gate gradients without a cached forward pass
    """

    def __init__(self, detail: str, **kwargs):
        super().__init__(detail, context=kwargs)


class TrainingError(FlexEventError):
    """
    Raised when an optimisation step cannot proceed.

    Examples:
        - Non-finite total loss (the context holds the loss breakdown)
        - Non-positive learning rate
    """

    def __init__(self, detail: str, **kwargs):
        super().__init__(detail, context=kwargs)


class DataError(FlexEventError):
    """
    Raised when an artifact file violates its format.

    Examples:
        - EVT1 file with a bad magic or unsorted timestamps
        - Labels JSON record with x_min >= x_max
    """

    def __init__(
        self,
        detail: str,
        path: Optional[str] = None,
        field: Optional[str] = None,
        record: Optional[int] = None,
        **kwargs
    ):
        location = []
        if path is not None:
            location.append(str(path))
        if record is not None:
            location.append(f"record {record}")
        if field is not None:
            location.append(f"field '{field}'")
        message = f"{detail} ({', '.join(location)})" if location else detail
        super().__init__(
            message,
            context={"path": path, "field": field, "record": record, **kwargs}
        )
        self.path = path
        self.field = field
        self.record = record


class UsageError(FlexEventError):
    """
    Raised when the command line is used incorrectly.
    """

    def __init__(self, detail: str, **kwargs):
        super().__init__(detail, context=kwargs)


class ConfigurationError(FlexEventError):
    """
    Raised when there's a configuration problem.

    Examples:
        - Experiment voxel dimensions disagree with the scene sensor
        - Unsupported MCP transport
    """

    def __init__(self, detail: str, config_key: Optional[str] = None):
        super().__init__(detail, context={"config_key": config_key})
        self.config_key = config_key


class MCPError(FlexEventError):
    """
    Raised when MCP-specific operations fail.
    """

    def __init__(self, detail: str, tool_name: Optional[str] = None, **kwargs):
        super().__init__(detail, context={"tool_name": tool_name, **kwargs})
        self.tool_name = tool_name
