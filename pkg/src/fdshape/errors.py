"""Exception hierarchy shared by every module of the package."""


class FdshapeError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FdshapeError, ValueError):
    pass


class SingularResolvent(FdshapeError):
    """``jwI - A`` is numerically singular (imaginary-axis pole)."""


class UnstableSystem(FdshapeError):
    pass


class ImproperTransfer(FdshapeError):
    pass


class DegenerateFraction(FdshapeError):
    pass


class IllPosedLoop(FdshapeError):
    pass


class ImproperEntry(FdshapeError):
    """A composed plant entry is improper and cannot be realized."""

    def __init__(self, entry, message=None):
        self.entry = entry
        super().__init__(message or f"plant entry {entry!r} is improper")


class UnknownChannel(FdshapeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown channel"


class SingularRecovery(FdshapeError):
    """``I + Dc2 D22`` is singular: the filter cannot be recovered."""


class SingularCompletion(FdshapeError):
    """``I - X1 Y1`` is singular: no invertible matrix completion."""


class InfeasibleAtStep1(FdshapeError):
    pass


class NonconvergedIteration(FdshapeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ImproperScaling(FdshapeError):
    pass


class UnstableScaling(FdshapeError):
    pass


class UnstableLoop(FdshapeError):
    pass
