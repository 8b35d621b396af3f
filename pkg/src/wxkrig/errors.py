"""Exception hierarchy shared across the package."""


class WxkrigError(Exception):
    """Base class for all package errors."""


class InvalidCoordinateError(WxkrigError, ValueError):
    pass


class NoCandidatesError(WxkrigError, ValueError):
    pass


class PanelStructureError(WxkrigError, ValueError):
    pass


class NoDataError(WxkrigError, ValueError):
    pass


class DomainError(WxkrigError, ValueError):
    pass


class SingularDesignError(WxkrigError, ValueError):
    pass


class MissingCovariateError(WxkrigError, ValueError):
    pass


class PeriodError(WxkrigError, ValueError):
    pass


class FoldError(WxkrigError, ValueError):
    pass


class EmptyInputError(WxkrigError, ValueError):
    pass


class UndefinedMomentError(WxkrigError, ValueError):
    pass


class KrigingFailure(WxkrigError):
    """A kriging model could not be fitted or solved.

    Every subclass is recoverable by substituting IDW.
    """


class InsufficientDataError(KrigingFailure, ValueError):
    pass


class InsufficientBinsError(KrigingFailure, ValueError):
    pass


class DegenerateFieldError(KrigingFailure, ValueError):
    pass


class NonConvergenceError(KrigingFailure):
    pass


class NumericalError(KrigingFailure):
    pass


class LoadError(WxkrigError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ElevationServiceError(WxkrigError):
    pass


class OfflineMissError(ElevationServiceError):
    def __init__(self, station_ids):
        self.station_ids = sorted(station_ids)
        super().__init__(
            "offline mode: no cached elevation for " + ", ".join(self.station_ids)
        )
