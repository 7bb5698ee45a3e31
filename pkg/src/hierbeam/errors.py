"""Exception hierarchy for hierbeam."""


class HierBeamError(Exception):
    """Base class for all library errors."""


class ModelError(HierBeamError):
    """A model was asked for a quantity outside its domain of validity."""


class InvalidTree(ModelError):
    pass


class PointOutsideCell(ModelError):
    pass


class EmptyPopulation(ModelError):
    pass


class NonPositiveRate(ModelError):
    pass


class Unstable(ModelError):
    pass


class NotALine(ModelError):
    pass


class MtOverload(ModelError):
    pass


class Inadmissible(ModelError):
    pass


class TooLarge(ModelError):
    pass


class ConfigError(HierBeamError):
    """Malformed configuration or input file.

    ``line`` is the 1-based line of the offending item when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
