"""Exception types shared across the package.

The CLI maps these onto process exit codes: ModelDomainError -> 1,
InputError -> 2, CapExceededError -> 3.
"""
from __future__ import annotations


class ModelDomainError(ValueError):
    """A model precondition does not hold (e.g. capacity <= demand)."""


class InputError(ValueError):
    """Malformed or inconsistent user input (files, schemas, CLI args)."""


class CapExceededError(RuntimeError):
    """An exhaustive search would exceed its configured evaluation cap."""
