"""Shared exception types."""


class LabsentryError(Exception):
    """Base class for package errors."""


class InsufficientDataError(LabsentryError):
    """Not enough rows/values to perform the requested operation."""


class DivergenceError(LabsentryError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class ModelFormatError(LabsentryError):
    """A model/bundle file is corrupt, truncated or has a wrong schema."""
