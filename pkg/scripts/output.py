"""
output.py - Output utilities for formatted messages

Results go to stdout; warnings, errors and debug lines go to stderr. Colors are
applied only when the target stream is a terminal.
"""

import os
import sys
from typing import Iterable, Optional, TextIO

import numpy as np

from src.utils import format_float


# ANSI color codes
class Colors:
    GREEN = "\033[0;32m"
    YELLOW = "\033[1;33m"
    RED = "\033[0;31m"
    BLUE = "\033[0;34m"
    CYAN = "\033[0;36m"
    NC = "\033[0m"  # No Color


def _paint(message: str, color: str, stream: TextIO) -> str:
    if color == Colors.NC or not stream.isatty():
        return message
    return f"{color}{message}{Colors.NC}"


def print_message(message: str, color: str = Colors.NC, stream: Optional[TextIO] = None):
    """Print a message with optional color"""
    stream = stream or sys.stdout
    print(_paint(message, color, stream), file=stream)


def print_warning(message: str):
    print_message(message, Colors.YELLOW, sys.stderr)


def print_error(message: str):
    print_message(message, Colors.RED, sys.stderr)


def print_success(message: str):
    print_message(message, Colors.GREEN, sys.stderr)


def print_section(title: str):
    """Print a section header"""
    print_message(f"\n=== {title} ===", Colors.BLUE)


def format_indices(indices: Iterable[int]) -> str:
    """Comma-separated 1-based indices"""
    return ",".join(str(int(i)) for i in indices)


def format_vector(values: np.ndarray) -> str:
    return ",".join(format_float(v) for v in np.asarray(values).ravel())


def debug_print(message: str):
    """Print debug message if debug mode is enabled"""
    if os.getenv("DEBUG", "0") == "1" or os.getenv("VERBOSE", "0") == "1":
        print(f"DEBUG: {message}", file=sys.stderr)
