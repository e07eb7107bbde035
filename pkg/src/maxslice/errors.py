"""Exception types shared across the package."""

from __future__ import annotations


class MaxsliceError(Exception):
    """Base class for all package errors."""


class DegenerateMetric(MaxsliceError):
    """A metric field is not positive definite at some grid node."""


class OutOfInterval(MaxsliceError):
    """A time value lies outside the open interval I of the spacetime."""


class NotSpacelike(MaxsliceError):
    """The induced metric of a graph fails to be positive definite."""


class IllConditioned(MaxsliceError):
    """The spacelike margin of a graph is below the configured floor."""


class NotMaximal(MaxsliceError):
    """A maximal-only identity was evaluated on a non-maximal graph.

    The computed value is kept on ``result`` so callers can still inspect it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NotMaximalWarning(UserWarning):
    """Emitted instead of :class:`NotMaximal` when ``strict=False``."""


class SingularSystem(MaxsliceError):
    """The Newton linear system could not be solved."""


class Stalled(MaxsliceError):
    """Pseudo-time step collapsed below the minimum allowed size."""


class ScenarioError(MaxsliceError):
    """A scenario file or expression could not be parsed or resolved."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        super().__init__(f"{message}{loc}")
        self.message = message
        self.line = line
        self.column = column
