"""Exception hierarchy shared by every windgp module."""


class WindGPError(ValueError):
    """Base class for all errors raised by windgp."""


# data ingestion / preprocessing
class MissingCell(WindGPError):
    pass


class DuplicateRow(WindGPError):
    pass


class NonpositiveCapacity(WindGPError):
    pass


class EmptyTrainingSlice(WindGPError):
    pass


class DegenerateExtent(WindGPError):
    pass


# parameters and kernels
class ConstraintViolation(WindGPError):
    pass


class InvalidRange(WindGPError):
    pass


class NotPositiveDefinite(WindGPError):
    pass


class AllStartsFailed(WindGPError):
    pass


# prediction / simulation
class DuplicateTarget(WindGPError):
    pass


class UnknownZone(WindGPError):
    pass


class UnknownDay(WindGPError):
    pass


# metrics
class EmptyInput(WindGPError):
    pass


class NonpositiveSigma(WindGPError):
    pass


class OutOfRange(WindGPError):
    pass
