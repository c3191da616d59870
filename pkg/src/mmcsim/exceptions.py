"""Exception hierarchy shared by every mmcsim module."""


class MMCError(Exception):
    """Base class for all errors raised by mmcsim."""


class InvalidInputError(MMCError, ValueError):
    """An argument has the wrong shape, range or type."""


class ConfigurationError(MMCError, ValueError):
    """Converter, controller or scenario configuration is unusable."""


class InfeasibleOperatingPointError(MMCError, ValueError):
    """No circulating-current offset can make the sum power term positive.

    Raised when ``Vdc**2 < C0``.
    """

    def __init__(self, message, C0=None, Vdc=None):
        super().__init__(message)
        self.C0 = C0
        self.Vdc = Vdc


class DivergedSimulationError(MMCError, RuntimeError):
    """A state variable exceeded the divergence guard."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class ZeroResistanceError(ConfigurationError, ZeroDivisionError):
    """The arm resistance is zero where the circulating offset ``Vd0 / R`` is needed."""
