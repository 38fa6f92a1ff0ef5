"""Exception hierarchy shared by the library, CLI, and service.

Each class carries a stable ``code`` string so errors can cross process
boundaries (CLI exit summaries, HTTP bodies) without string matching.
"""


class FetaugError(Exception):
    """Base class for all package errors."""

    code = "error"


class ParameterError(FetaugError):
    """A parameter is outside its documented range or otherwise invalid."""

    code = "parameter"


class ShapeError(FetaugError):
    """Array shapes or grid metadata do not match."""

    code = "shape"


class DataError(FetaugError):
    """Input data violates a contract (empty mask, all-NaN channel, ...)."""

    code = "data"


class SchemaError(FetaugError):
    """A serialized document fails schema validation."""

    code = "schema"


class FileFormatError(FetaugError):
    """A binary file is not in the supported format subset."""

    code = "format"


class PlacementInfeasibleError(FetaugError):
    """No rigid placement satisfying the containment constraint was found."""

    code = "placement_infeasible"


class EmptyBankError(FetaugError):
    """A composite was requested from an empty bank."""

    code = "empty_bank"
