"""Exception hierarchy.

Input problems derive from :class:`InputError` (also a ``ValueError``);
failures of the numerics derive from :class:`NumericalError`.  The CLI maps
the two families to different exit codes.
"""


class FlagspecError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FlagspecError, ValueError):
    """The caller supplied an invalid or inconsistent argument."""


class NumericalError(FlagspecError, ArithmeticError):
    """A computation could not be completed to the required accuracy."""


class InvalidMatrix(InputError):
    pass


class NotSymmetric(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class SignatureMismatch(InputError):
    pass


class EmptyLayer(InputError):
    pass


class NotOnComponent(InputError):
    pass


class UnsupportedRoots(InputError):
    pass


class ZeroVector(InputError):
    pass


class NonConvergence(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NotPositiveDiagonalizable(NumericalError):
    pass


class Singular(NumericalError):
    pass


class Overflow(NumericalError):
    pass
