"""Exception types raised across the package.

All input/validation problems derive from :class:`InputError` so the CLI can
map them onto exit code 2 in one place.
"""


class InputError(ValueError):
    """Base class for malformed or inconsistent inputs."""


class DuplicateLabel(InputError):
    pass


class EmptyLabelSet(InputError):
    pass


class UnknownLabel(InputError):
    def __init__(self, label, line=None):
        self.label = label
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown label {label!r}{where}")


class MalformedLine(InputError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DimensionMismatch(InputError):
    pass


class InvalidTemplate(InputError):
    pass


class InvalidConfig(InputError):
    pass


class SkippedNoPositives(InputError):
    """Raised when average precision is requested for a ranking with no positives."""
