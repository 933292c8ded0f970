"""Exception types shared across the package."""


class BerryQPTError(Exception):
    """Base class for all errors raised by berryqpt."""


class UndefinedAngleError(BerryQPTError):
    """A mixing angle is undefined because the mode is exactly gapless."""


class NoEquatorialModeError(BerryQPTError):
    """The field lies outside (-1, 1), so no mode satisfies cos x0 = lambda."""


class NonHermitianError(BerryQPTError):
    pass


class ConvergenceError(BerryQPTError):
    """An iterative procedure hit its cap without meeting its tolerance."""


class DegeneracyError(BerryQPTError):
    """A tracked band touches another band where it must stay isolated.

    ``where`` carries the offending parameter point (or ``None``) and
    ``index`` an optional position in a sequence (loop index, sample index).
    """

    def __init__(self, message, where=None, index=None):
        super().__init__(message)
        self.where = where
        self.index = index


class UnwrapError(BerryQPTError):
    """Adjacent loop phases jump by at least pi, so unwrapping is ambiguous."""


class BisectionError(BerryQPTError):
    pass


class TooFewPointsError(BerryQPTError):
    pass


class ConfigError(BerryQPTError):
    """Invalid scan configuration. ``field`` is a dotted path like ``xy.gamma``."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if field is not None:
            loc.append(f"field {field}")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
