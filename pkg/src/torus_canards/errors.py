"""Exception hierarchy.  Every library failure derives from ``CanardError``."""


class CanardError(Exception):
    pass


class GeometryError(CanardError):
    pass


class NoFolds(GeometryError):
    pass


class TooManyFolds(GeometryError):
    pass


class BranchLost(GeometryError):
    pass


class NumericalFailure(CanardError):
    """Integration could not be completed; the CLI maps these to exit code 3."""


class StepLimitExceeded(NumericalFailure):
    pass


class NonFiniteState(NumericalFailure):
    pass


class NoBracket(CanardError):
    pass


class SlopeOneNotFound(CanardError):
    pass


class BracketInvalid(CanardError):
    pass


class WindowBelowFloor(CanardError):
    pass


class OutOfStrip(CanardError):
    pass


class NoRoot(CanardError):
    pass


class NeverExits(CanardError):
    pass


class ConfigError(CanardError):
    pass
