"""Exception hierarchy shared across the package."""


class FairlendError(Exception):
    """Base class for all package errors."""


# --- data layer ---

class MissingColumn(FairlendError):
    pass


class EmptyFile(FairlendError):
    pass


class InconsistentRowLength(FairlendError):
    pass


class BadLabelValue(FairlendError):
    pass


class InvalidConfig(FairlendError):
    pass


# --- boosting engine ---

class EmptyTrainingSet(FairlendError):
    pass


class MuOutOfRange(FairlendError):
    pass


class UnknownFeature(FairlendError):
    pass


class ModelFormatError(FairlendError):
    pass


# --- bias injection ---

class TargetUnreachable(FairlendError):
    pass


# --- de-biasing ---

class ModelMissingProhibitedFeature(FairlendError):
    pass


class DegenerateScores(FairlendError):
    pass


# --- evaluation ---

class OneClassOnly(FairlendError):
    pass
