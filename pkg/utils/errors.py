# utils/errors.py

from typing import Optional


class IetsError(Exception):
    """Base class for every error raised by the library"""


class FormatError(IetsError):
    """Malformed input file; carries a byte offset or a 1-based line number"""

    def __init__(self, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        self.offset = offset
        self.line = line
        where = ''
        if offset is not None:
            where = f" (byte offset {offset})"
        elif line is not None:
            where = f" (line {line})"
        super().__init__(f"{message}{where}")


class GeometryError(IetsError):
    """Event coordinate outside the sensor geometry"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        suffix = f" (event index {index})" if index is not None else ''
        super().__init__(f"{message}{suffix}")


class PolarityError(IetsError):
    """Polarity outside {-1, +1}"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        suffix = f" (event index {index})" if index is not None else ''
        super().__init__(f"{message}{suffix}")


class WindowError(IetsError):
    """Timestamp negative or outside the stream's time window"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        suffix = f" (event index {index})" if index is not None else ''
        super().__init__(f"{message}{suffix}")


class ConfigError(IetsError):
    """Invalid pipeline configuration"""


class TrainingError(IetsError):
    """Classifier pre-condition violated"""


class ExportError(IetsError):
    """Frame or report could not be written"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        suffix = f": {path}" if path else ''
        super().__init__(f"{message}{suffix}")
