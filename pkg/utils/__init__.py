
# utils/__init__.py
# ============================================================

from .errors import IetsError
from .logger import setup_logger
from .reports import write_json_report

__all__ = ['IetsError', 'setup_logger', 'write_json_report']
