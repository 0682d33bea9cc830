"""Exception hierarchy shared by every module."""


class PhgameError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(PhgameError, ValueError):
    """Malformed constraint graph (self-loop, duplicate edge, bad index)."""


class DomainViolation(PhgameError, ArithmeticError):
    """A barrier spring was evaluated at or beyond its critical distance."""

    def __init__(self, message, edges=()):
        super().__init__(message)
        self.edges = tuple(edges)


class SingularConfiguration(PhgameError, ArithmeticError):
    """Two agents coincide on an edge whose rest length is positive."""

    def __init__(self, message, edges=()):
        super().__init__(message)
        self.edges = tuple(edges)


class ScenarioError(PhgameError, ValueError):
    """Scenario file could not be parsed or failed validation.

    ``field`` names the offending entry (dotted path) and ``line`` the
    1-based line in the source file when the parser knows it.
    """

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.detail = message
        self.field = field
        self.line = line


class InfeasibleInitialCondition(ScenarioError):
    """An edge starts outside the domain of its spring."""
