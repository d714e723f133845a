"""This module defines the exceptions raised by nicereg.

Each exception carries the process exit code used by the command-line
tool.

Copyright 2026 nicereg developers
"""

__all__ = ('NiceRegError', 'ConfigError', 'DataError', 'ShapeError',
           'FormatError', 'UnsupportedDtypeError', 'DegenerateInputError',
           'EmptyEvaluationError', 'GenerationError', 'NumericalError')


class NiceRegError(Exception):

    exit_code = 1


class ConfigError(NiceRegError, ValueError):

    exit_code = 2


class DataError(NiceRegError, ValueError):

    exit_code = 3


class ShapeError(DataError):
    pass


class FormatError(DataError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class DegenerateInputError(DataError):
    pass


class EmptyEvaluationError(DataError):
    pass


class GenerationError(NiceRegError, RuntimeError):

    exit_code = 4


class NumericalError(NiceRegError, RuntimeError):
    """Raised when the loss stops being finite.  The per-level terms
    at the failing iteration are kept in `terms`."""

    exit_code = 4

    def __init__(self, msg, terms=None):

        super(NumericalError, self).__init__(msg)
        self.terms = terms or {}
