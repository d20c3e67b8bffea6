"""Exception types raised across the package.

Every error the package raises deliberately derives from AlgoSelectError so
callers (and the CLI) can distinguish our failures from genuine bugs.
"""


class AlgoSelectError(Exception):
    """Base class for all errors raised by this package."""


# scenario parsing and io

class MissingFileError(AlgoSelectError):
    """A required scenario file is absent."""


class MissingKeyError(AlgoSelectError):
    """A required key is absent from a description file."""


class MalformedValueError(AlgoSelectError):
    """A value could not be parsed or violates a documented constraint."""


class DataBeforeHeaderError(AlgoSelectError):
    """An ARFF data row appeared before the @data marker."""


class ArityMismatchError(AlgoSelectError):
    """An ARFF data row has a different arity than the declared attributes."""


class InconsistentIdsError(AlgoSelectError):
    """Run records reference unknown ids or leave the run matrix incomplete."""


class DegenerateSplitError(AlgoSelectError):
    """A train/test split would leave one side empty."""


# embedding catalogs

class DimMismatchError(AlgoSelectError):
    """Token embedding dimensions disagree within or across entries."""


class DuplicateAlgorithmError(AlgoSelectError):
    """The same algorithm id appears twice in a catalog."""


class EmptyCatalogError(AlgoSelectError):
    """A catalog contains no entries."""


class UnknownAlgorithmError(AlgoSelectError):
    """An algorithm id is not present in the catalog."""


class MissingEmbeddingError(AlgoSelectError):
    """Selection requires an embedding the catalog does not provide."""


class TransportError(AlgoSelectError):
    """A remote embedding request failed at the HTTP layer."""


class MalformedResponseError(AlgoSelectError):
    """A remote embedding response does not match the documented shape."""


# computation graph

class ShapeMismatchError(AlgoSelectError):
    """Operand shapes are incompatible for the requested operation."""


class ZeroVectorError(AlgoSelectError):
    """Cosine similarity of a vector with norm below threshold."""


class NonScalarRootError(AlgoSelectError):
    """backward() was called on a non-scalar tensor."""


# layers and model wiring

class BadKError(AlgoSelectError):
    """Requested top-k is outside [1, dimension]."""


class IndexOutOfRangeError(AlgoSelectError):
    """An embedding-table row index is out of range."""


class MissingIndexError(AlgoSelectError):
    """A table-based model was scored without an algorithm index."""


class VariantMismatchError(AlgoSelectError):
    """The model variant does not support the requested operation."""


# training and evaluation

class NonFiniteLossError(AlgoSelectError):
    """Training produced a NaN or infinite loss."""


class EmptySubsetError(AlgoSelectError):
    """An evaluation subset contains no instances."""


class EmptyDatasetError(AlgoSelectError):
    """A dataset-level statistic was requested on zero rows."""


# cli configuration

class ConfigError(AlgoSelectError):
    """A run configuration is missing keys or holds invalid values."""
