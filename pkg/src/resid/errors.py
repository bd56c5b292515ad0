"""Exception hierarchy shared across the package."""


class ResidError(Exception):
    """Base class for all errors raised by resid."""


class DomainError(ResidError, ValueError):
    """A probability argument lies outside (0, 1) or is not finite."""


class SolverError(ResidError):
    """Bisection failed to shrink the bracket within the iteration budget."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


class MalformedRecordError(ResidError, ValueError):
    """A run record violates its invariants or arrives out of sequence."""


class MissingLineCountError(ResidError, KeyError):
    """A chunk id has no entry in the chunk database."""

    def __str__(self):
        return Exception.__str__(self)


class ParseError(ResidError):
    """Lexical or syntactic error in a source file."""

    def __init__(self, message, path="<source>", line=0, column=0):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path = path
        self.line = line
        self.column = column


class StaleDatabaseError(ResidError):
    """The chunk database was built from different sources."""


class ConfigurationError(ResidError, ValueError):
    """Invalid user-supplied configuration (rules, graphs, parameters)."""
