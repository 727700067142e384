"""Shared exception types."""

from __future__ import annotations


class MoamaError(Exception):
    """Base class for package errors."""


class ConfigError(MoamaError):
    """Invalid configuration file, key, or value."""


class DataError(MoamaError):
    """Unusable input data (missing columns, unreadable files, bad labels)."""


class SmilesError(DataError):
    """SMILES grammar violation; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class NumericsError(MoamaError, ArithmeticError):
    """Non-finite value produced by the numerics core."""
