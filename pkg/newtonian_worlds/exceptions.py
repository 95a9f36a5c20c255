"""
Exceptions raised by Newtonian Worlds.
"""


class NewtonianWorldsError(Exception):
    """Base class for every error raised by the library."""


class ParameterError(NewtonianWorldsError, ValueError):
    """A parameter, grid or potential violates its invariants."""


class ConfigError(NewtonianWorldsError):
    """A scenario configuration is invalid."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericGuardError(NewtonianWorldsError):
    """A numerical stability guard rejected a step."""

    def __init__(self, guard: str, message: str):
        self.guard = guard
        super().__init__(f"[{guard}] {message}")


class NodeError(NewtonianWorldsError):
    """An operation needs a quantity that is undefined at a node of the density."""


class WorldCountError(NewtonianWorldsError):
    """An ensemble has too few worlds for the requested operation."""


class QuantizationViolation(NewtonianWorldsError):
    """The circulation around a loop is not an integer multiple of Planck's constant."""

    def __init__(self, loop, message: str | None = None):
        self.loop = loop
        super().__init__(
            message
            or f"no wavefunction exists: circulation around {loop.description} is {loop.circulation:.6g}, "
            f"residual {loop.residual:.3g} from {loop.winding} h"
        )


class AmbiguityError(NewtonianWorldsError):
    """The density support splits into components whose relative phases are free."""


class PhaseMismatchError(NewtonianWorldsError):
    """A phase field does not generate the given velocity field."""


class NoCompatibleWorldsError(NewtonianWorldsError):
    """A conditioning region contains no worlds (or no density)."""


class SymmetryPreconditionError(NewtonianWorldsError):
    """A symmetry transform was requested for a scenario that does not admit it."""


class BoundaryClipError(NewtonianWorldsError):
    """A shift would push density through a box boundary."""
