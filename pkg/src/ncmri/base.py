"""Shared primitives: matrix geometry and the package exception hierarchy."""
from typing import NamedTuple


class NcmriError(Exception):
    """Base class for all package errors."""


class ArgumentError(NcmriError, ValueError):
    """A caller-supplied argument violates a precondition."""


class ConfigError(NcmriError):
    """A configuration file or derived configuration is invalid."""


class FormatError(NcmriError, IOError):
    """A binary or text file does not match its expected format.

    Carries the byte offset at which parsing failed when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(NcmriError, ArithmeticError):
    """A numeric routine produced non-finite or degenerate values."""


class GuardError(NcmriError):
    """A size guard refused a run that would be accidentally large."""


class MatrixSize(NamedTuple):
    """Reconstruction grid size in voxels along x, y, z."""

    nx: int
    ny: int
    nz: int

    def validate(self):
        for name, n in zip(("nx", "ny", "nz"), self):
            if not isinstance(n, (int,)) or n < 4:
                raise ArgumentError(f"{name} must be an integer >= 4, got {n!r}")
        return self

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)
