"""Exception types shared by all modules.

Everything derived from :class:`InputError` maps to CLI exit code 2,
:class:`MetricError` maps to exit code 3.
"""


class NormScaleError(Exception):
    exit_code = 1


class InputError(NormScaleError, ValueError):
    exit_code = 2


class ShapeError(InputError):
    pass


class ParameterError(InputError):
    pass


class FitError(InputError):
    pass


class DomainError(InputError):
    pass


class ConsistencyError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.offset = offset


class ValidationError(InputError):
    pass


class MetricError(NormScaleError):
    exit_code = 3
