"""Exception hierarchy shared by every halkit module."""


class HalkitError(Exception):
    """Base class for all halkit errors."""


class DomainError(HalkitError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ShapeError(HalkitError, ValueError):
    """Array dimensions do not agree."""


class SizeError(HalkitError, ValueError):
    """A problem is larger than the routine is meant to handle."""


class ConsistencyError(HalkitError, ValueError):
    """Two objects that must describe the same data do not."""


class UnsupportedError(HalkitError, ValueError):
    """The operation does not support this kind of input."""


class NumericalError(HalkitError, ArithmeticError):
    """A non-finite value appeared during a computation."""
