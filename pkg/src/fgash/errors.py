"""Exception hierarchy.

Every numerical abort derives from :class:`NumericalError` so the CLI can map
it to exit code 3; configuration problems raise :class:`ConfigError` (exit 2).
"""


class FgashError(Exception):
    pass


class ConfigError(FgashError, ValueError):
    pass


class NumericalError(FgashError, ArithmeticError):
    pass


class DegenerateGap(NumericalError):
    """The two adiabatic energies coincide (to 1e-12) at the query point."""


class MeshTooCoarse(NumericalError):
    pass


class EmptyField(NumericalError):
    pass


class IllConditionedZ(NumericalError):
    pass


class HopProbabilityOverflow(NumericalError):
    pass


class MixedFinalTimes(NumericalError):
    pass


class MeshMismatch(NumericalError):
    pass


class ZeroField(NumericalError):
    pass


class TailTooLarge(NumericalError):
    pass


class BoundaryContamination(NumericalError):
    pass
