"""Exception types shared across the package."""


class XplainError(Exception):
    """Base class for all domain errors raised by this package."""


class SchemaError(XplainError):
    """Schema definition is invalid, or a value/instance does not conform to it."""


class DataError(XplainError):
    """A dataset file or payload could not be parsed into a valid dataset."""


class QueryError(XplainError):
    """A counterfactual query violates its preconditions."""


class GridTooLargeError(QueryError):
    """The exhaustive search grid exceeds the safety guard."""


class LeafToggleError(XplainError):
    """Attempted to expand or contract a node that has no subtree."""


class StaleViewError(XplainError):
    """A view mutation was submitted against an outdated revision."""
