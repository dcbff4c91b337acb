"""Exception types.

Every error raised by the toolkit carries a short machine-readable ``code``
(``"not_detectable"``, ``"chi_too_small"``, ...) next to the human message so
that the CLI and tests can dispatch on it without parsing text.
"""


class DuioError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class LinalgError(DuioError):
    pass


class GraphError(DuioError):
    pass


class DesignError(DuioError):
    pass


class SimulationError(DuioError):
    pass


class BlowUpError(SimulationError):
    """Raised when the integrated state stops being finite."""

    def __init__(self, time, trace=None):
        self.time = time
        self.trace = trace
        super().__init__("blow_up", f"non-finite state at t={time:.6g} s")


class ScenarioError(DuioError):
    """Malformed scenario file; ``location`` names the offending field or line."""

    def __init__(self, code, message, location=None):
        self.location = location
        where = f" [{location}]" if location else ""
        super().__init__(code, f"{message}{where}")
