"""Exception hierarchy shared by all clusterflow modules."""


class ClusterFlowError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ClusterFlowError):
    """Vectors or boxes with incompatible dimensionality."""


class MissingDataError(ClusterFlowError):
    """A missing entry reached an operation that requires complete data."""


class NoSharedSubspaceError(ClusterFlowError):
    """Two objects have no dimension in which both carry a present value."""


class EmptyInputError(ClusterFlowError):
    """An operation that needs at least one element received none."""


class DegenerateSeedError(ClusterFlowError):
    """Too few distinct points to place the requested number of centroids."""


class EmptyDatasetError(ClusterFlowError):
    """A tree build was attempted on an empty dataset."""


class ArityError(ClusterFlowError):
    """A reasoning task received the wrong number of items."""


class UndefinedPreferenceError(ClusterFlowError):
    """Preference score is undefined when both looking measures are zero."""


class ParseError(ClusterFlowError):
    """Malformed input file. Carries the offending row when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class LabelError(ClusterFlowError):
    """A data row without any label."""


class VersionError(ClusterFlowError):
    """A persisted file with an unknown magic or version header."""
