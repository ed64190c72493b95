"""Exception hierarchy shared across the package."""


class ProvRefineError(Exception):
    """Base class for all package errors."""


class OracleLimitExceeded(ProvRefineError):
    """An exponential oracle was invoked on an instance above its size cap."""


class EmptyLoop(ProvRefineError):
    """Justifications requested for an empty vertex set."""


class ParseError(ProvRefineError):
    """Syntax error in an input file; carries a line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class DomainOverflow(ProvRefineError):
    """A derived integer left the configured domain bounds."""


class UnknownParameter(ProvRefineError):
    """An abstraction mentions a parameter the analysis does not declare."""


class NotSubgraph(ProvRefineError):
    """A hypergraph was expected to be a subgraph of the model blueprint."""


class SelfLoopArc(ProvRefineError):
    """An arc whose head occurs in its own body (forbidden by the bound machinery)."""


class ObservationOutOfRange(ProvRefineError):
    """An observation references facts outside what the blueprint can reach."""


class DegenerateTrainingSet(ProvRefineError):
    """No observation constrains any hyperparameter; nothing to learn."""


class CorpusTooSmall(ProvRefineError):
    """Leave-one-out needs at least two programs."""


class WeightOverflow(ProvRefineError):
    """A weight does not fit the integral WCNF encoding."""


class NotAModel(ProvRefineError):
    """An assignment claimed to satisfy a hard constraint does not."""


class QueryNotInProvenance(ProvRefineError):
    """The query fact is not a vertex of the provenance being encoded."""


class BudgetExceeded(ProvRefineError):
    """A solver ran out of its time budget (distinct from unsatisfiability)."""
