"""Exception hierarchy shared by all bellsim modules."""

from __future__ import annotations


class BellsimError(Exception):
    """Base class for all bellsim errors."""


class ConfigurationError(BellsimError):
    """A scenario configuration is inconsistent or unphysical."""


class InputError(BellsimError):
    """User-supplied data (files, sequences, arguments) is invalid."""


class InvalidStateError(InputError):
    """A density matrix violates Hermiticity, unit trace or positivity."""


class InvalidFrameError(InputError):
    """A boost velocity at or above the speed of light was requested."""


class NoSimultaneousFrameError(BellsimError):
    """No inertial frame makes the two events simultaneous (not space-like)."""


class CausalityViolationError(ConfigurationError):
    """An exploit mode was paired with a geometry that forbids it."""


class NoSignalError(BellsimError):
    """No significant correlation peak was found between two tag streams."""


class InsufficientDataError(BellsimError):
    """A required setting combination has no coincidences."""


class NumericalError(BellsimError):
    """A numerical routine failed to converge or produced invalid output."""
