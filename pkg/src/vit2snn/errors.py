"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/domain problems exit 2,
graph-structure violations exit 3, verification failures exit 4 and
plain I/O trouble exits 1.
"""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ValueError):
    """A tensor contains NaN/Inf where finite values are required."""


class DomainError(ValueError):
    """A scalar parameter is outside its allowed range."""


class FormatError(ValueError):
    """An archive, manifest or dataset file is malformed."""


class GraphValidationError(ValueError):
    """A model or SNN graph violates a structural invariant."""


class StateError(RuntimeError):
    """A stateful module was driven with inconsistent inputs."""
