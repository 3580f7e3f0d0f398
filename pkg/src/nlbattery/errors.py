"""Exception types raised across the package."""


class BatteryError(Exception):
    """Base class for every error raised by nlbattery."""


class IndexOutOfCutoff(BatteryError, IndexError):
    pass


class CutoffTooSmall(BatteryError, ValueError):
    pass


class CutoffMismatch(BatteryError, ValueError):
    pass


class NotHermitian(BatteryError, ValueError):
    pass


class NonpositiveTime(BatteryError, ValueError):
    pass


# same failure mode, the certification code talks about tau
NonpositiveTau = NonpositiveTime


class FlatTrace(BatteryError, RuntimeError):
    pass


class NeverOrthogonal(BatteryError, RuntimeError):
    pass


class ZeroVariance(BatteryError, ValueError):
    pass


class NonpositiveValue(BatteryError, ValueError):
    pass


class InsufficientPointsForFit(BatteryError, ValueError):
    pass


class EvenOrderUnsupported(BatteryError, ValueError):
    pass


class StepTooLarge(BatteryError, RuntimeError):
    pass


class InvariantViolation(BatteryError, RuntimeError):
    """A physics invariant failed; ``name`` identifies which one."""

    def __init__(self, name, detail=""):
        self.name = name
        self.detail = detail
        super().__init__(f"{name}: {detail}" if detail else name)


class ConfigError(BatteryError, ValueError):
    pass
