"""Exception types shared across the package."""


class PspeError(Exception):
    pass


class InvalidShape(PspeError, ValueError):
    pass


class InvalidDistribution(PspeError, ValueError):
    pass


class IndexOutOfRange(PspeError, IndexError):
    pass


class EmptyDifference(PspeError):
    """The candidate policy set is contained in the base set."""


class TooManyPolicies(PspeError):
    pass


class DegenerateWindow(PspeError, ValueError):
    pass


class ConfigError(PspeError):
    pass


class ParseError(ConfigError):
    pass


class InvalidConfig(ConfigError, ValueError):
    pass
