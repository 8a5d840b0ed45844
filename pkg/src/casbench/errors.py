"""Exception hierarchy shared by all casbench modules.

The CLI maps these onto its exit-code contract, so raising the right
class matters more than the wording of the message.
"""

from __future__ import annotations


class CasbenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CasbenchError):
    """A path, config file, or registry file is missing or unusable."""


class NotFoundError(CasbenchError):
    """A named problem, instance, backend, or table is not known."""


class ConflictError(CasbenchError):
    """An attempt to register a name that is already taken."""


class ValidationError(CasbenchError):
    """Data violates an invariant (e.g. an undeclared variable in a basis)."""


class PolynomialParseError(CasbenchError):
    """Polynomial text violates the grammar.

    ``offset`` is the 0-based character position of the offending token.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ResourceFormatError(CasbenchError):
    """A resource XML file is malformed.

    ``line`` and ``column`` are 1-based when known, 0 otherwise.
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        if line:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class TurtleParseError(CasbenchError):
    """Metadata text violates the supported Turtle subset."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class PrefixResolutionError(CasbenchError):
    """A prefixed name uses a prefix that was never declared."""

    def __init__(self, prefix: str, line: int = 0, column: int = 0):
        loc = f" (line {line}, column {column})" if line else ""
        super().__init__(f"undeclared prefix '{prefix}'{loc}")
        self.prefix = prefix
        self.line = line
        self.column = column


class QueryError(CasbenchError):
    """A triple-pattern query is malformed (e.g. filter on an unbound variable)."""


class RenderError(CasbenchError):
    """A script template cannot be rendered for the given inputs."""


class BuildError(CasbenchError):
    """A taskfolder cannot be materialized from the given task."""


class ClobberError(BuildError):
    """Refusal to write into a non-empty output directory."""


class TaskFolderLoadError(CasbenchError):
    """A taskfolder on disk is missing its descriptor or settings."""


class IntegrityError(TaskFolderLoadError):
    """A taskfolder descriptor references a script that is absent on disk."""


class TimeParseError(CasbenchError):
    """POSIX time output is missing or malformed."""


class RunAborted(CasbenchError):
    """The whole run was aborted (second interrupt or unusable results dir)."""

    def __init__(self, message: str, interrupted: bool = False):
        super().__init__(message)
        self.interrupted = interrupted


class ReportError(CasbenchError):
    """A results document cannot be read or combined."""
