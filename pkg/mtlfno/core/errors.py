"""Exception hierarchy shared by the numerical core, the loaders and the CLI.

Every failure raised on purpose by ``mtlfno`` derives from ``MtlFnoError`` so
callers (most notably the CLI commands, which translate errors into stable
exit codes) can handle them consistently.
"""

from __future__ import annotations

from typing import Optional


class MtlFnoError(Exception):
    """Base exception for every deliberate ``mtlfno`` failure."""


class ShapeError(MtlFnoError):
    """Raised when operand shapes violate an operation's shape contract."""


class ContractError(MtlFnoError):
    """Raised when a precondition of an operation is violated."""


class SingularityError(MtlFnoError):
    """Raised when a matrix slice is numerically singular.

    Attributes:
        slice_index: Index of the offending slice within the leading (batch)
            axes of the input, ``()`` for a single matrix.
    """

    def __init__(self, message: str, slice_index: tuple[int, ...] = ()):
        super().__init__(f"{message} (slice {slice_index})")
        self.slice_index = slice_index


class NumericError(MtlFnoError):
    """Raised when training produces a non-finite value.

    Attributes:
        tensor_name: Name of the first non-finite tensor that was found.
    """

    def __init__(self, tensor_name: str, message: Optional[str] = None):
        super().__init__(message or f"non-finite values in {tensor_name!r}")
        self.tensor_name = tensor_name


class ConfigError(MtlFnoError):
    """Raised for invalid configuration files, specs or CLI overrides."""


class DatasetError(MtlFnoError):
    """Base class for dataset loading failures."""


class ChecksumError(DatasetError):
    """Raised when a dataset file does not match its recorded checksum."""

    def __init__(self, path: str):
        super().__init__(f"checksum mismatch for {path}")
        self.path = path


class VersionError(DatasetError):
    """Raised when a manifest or binary file carries an unsupported version."""

    def __init__(self, found: object, expected: object, path: str = ""):
        super().__init__(
            f"unsupported format version {found!r} (expected {expected!r}) {path}".strip()
        )
        self.found = found
        self.expected = expected


class TruncatedFileError(DatasetError):
    """Raised when a binary file ends before its declared payload."""

    def __init__(self, path: str, detail: str = ""):
        super().__init__(f"truncated file {path} {detail}".strip())
        self.path = path


class CheckpointError(MtlFnoError):
    """Raised when an ``MTLF`` checkpoint container cannot be read."""
