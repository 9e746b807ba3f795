"""Exception and warning types shared across the package."""


class EstbeamError(Exception):
    """Base class for all errors raised by this package."""


class NoVisibleContour(EstbeamError):
    """No contour sample has a line of sight to the base station."""


class NonContiguousLoS(UserWarning):
    """The visible part of the contour splits into several arcs."""


class DegenerateBeampattern(EstbeamError):
    """Some subsection receives (numerically) zero transmit power."""


class SingularPathLossInfo(EstbeamError):
    """The Fisher information on the path-loss coefficient is not positive."""


class SingularEfim(EstbeamError):
    """The equivalent Fisher information matrix is numerically singular."""


class ExtractionFailed(EstbeamError):
    """Every randomization epoch was rejected during rank-one extraction."""


class DelayOverflow(EstbeamError):
    """A round-trip delay does not fit inside the simulated sample window."""


class ScenarioError(EstbeamError, ValueError):
    """A scenario file or command-line value is malformed."""


class InfeasibleDesign(EstbeamError):
    """The beamforming program is infeasible; carries the solver certificate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class SolverFailure(EstbeamError):
    """The conic solver stopped without a certified answer."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
