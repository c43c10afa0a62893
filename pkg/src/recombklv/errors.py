"""Exception types raised by the library."""


class RecombError(Exception):
    """Base class for all library errors."""


class NumericalDegeneracy(RecombError):
    """No null vector meets the residual bound; the input is badly scaled."""


class UnsupportedDepth(RecombError):
    pass


class ParseError(RecombError):
    pass


class DegreeCheckFailed(RecombError):
    """A cubature formula does not integrate its declared degree."""


class OdeDivergence(RecombError):
    pass


class TreeTooLarge(RecombError):
    pass


class ConfigError(RecombError):
    pass
