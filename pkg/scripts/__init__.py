"""
Command-line support package for mmv-anomaly

Argument parsing, message output, error reporting and the action handlers
behind manager.py.
"""

from .actions import (
    action_detect,
    action_generate,
    action_phase,
    action_theory,
    build_detector,
)
from .args import ACTIONS, create_parser, parse_and_setup_args, setup_logging, validate_args
from .errors import ErrorContext, handle_error
from .output import (
    Colors,
    debug_print,
    format_indices,
    format_vector,
    print_error,
    print_message,
    print_section,
    print_success,
    print_warning,
)

__all__ = [
    # Output
    "Colors",
    "print_message",
    "print_section",
    "print_success",
    "print_error",
    "print_warning",
    "debug_print",
    "format_indices",
    "format_vector",
    # Errors
    "handle_error",
    "ErrorContext",
    # Argument parsing
    "ACTIONS",
    "create_parser",
    "parse_and_setup_args",
    "setup_logging",
    "validate_args",
    # Action handlers
    "action_generate",
    "action_detect",
    "action_phase",
    "action_theory",
    "build_detector",
]
