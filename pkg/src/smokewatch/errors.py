"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: plain ``ValueError`` means a
validation/usage problem (exit 1), ``DataError`` covers unreadable or
malformed files (exit 2), and ``ContractError`` covers violated runtime
contracts such as shape mismatches (exit 3).
"""


class ContractError(Exception):
    """A runtime contract was violated (wrong shapes, broken preconditions)."""


class ShapeError(ContractError):
    """Tensor or layer shapes do not line up."""


class DataError(Exception):
    """A file could not be read or its contents are malformed."""


class ImageFormatError(DataError):
    """Image bytes do not decode; message carries the failing byte offset."""


class ManifestError(DataError):
    """Dataset manifest is structurally invalid."""


class WeightsFormatError(DataError):
    """Weights file is corrupt or does not match the expected model layout."""
