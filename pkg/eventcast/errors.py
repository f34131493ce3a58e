from typing import Any, Dict, List, Optional, Tuple


class EventcastError(Exception):
    """Base error; `code` is the machine-readable slug printed by the CLI."""

    code = "eventcast_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "type": type(self).__name__, "message": self.message}


class DataValidationError(EventcastError):
    code = "invalid_data"


class ParseError(DataValidationError):
    code = "parse_error"

    def __init__(self, message: str, line: Optional[int] = None, **details: Any):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **details)
        self.line = line


class WeatherGapError(DataValidationError):
    code = "weather_gap"

    def __init__(self, message: str, gaps: List[Tuple[Any, Any]]):
        super().__init__(message)
        self.gaps = gaps


class AlignmentError(EventcastError):
    code = "alignment_error"


class ConfigError(EventcastError):
    code = "config_error"


class SmoothError(EventcastError):
    code = "smooth_error"


class DesignError(EventcastError):
    code = "design_error"


class ConvergenceError(EventcastError):
    code = "convergence_error"

    def __init__(self, message: str, trace: Optional[List[float]] = None, **details: Any):
        super().__init__(message, **details)
        self.trace = list(trace or [])


class ForecastError(EventcastError):
    code = "forecast_error"


class MetricError(EventcastError):
    code = "metric_error"
