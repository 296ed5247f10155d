"""Exception types shared across the package.

Numerical routines raise these instead of returning sentinel values, so
callers (and the CLI) can distinguish bad inputs (usage errors) from
failed computations.
"""


class FracVortexError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FracVortexError):
    """Invalid user-supplied configuration; message names the offending field."""


class ZeroValue(FracVortexError):
    """An operation that needs nonzero complex input received (near-)zero."""


class ZeroCorner(ZeroValue):
    """A winding computation hit a (near-)zero value on the loop."""


class NonzeroWinding(FracVortexError):
    """An m-th root lift was requested on a region with nontrivial winding."""


class UnwrapFailure(FracVortexError):
    """Boundary phase unwrapping saw an increment too large to be trusted."""


class DegenerateDomain(FracVortexError):
    """The grid resolution is too coarse for the requested domain."""


class SolverDiverged(FracVortexError):
    """A linear solve failed to reach the required residual."""


class RadiusTooSmall(FracVortexError):
    """A puncture radius is below the resolvable scale of the grid."""


class NonConvergence(FracVortexError):
    """An iterative minimization hit its iteration cap in strict mode."""


class InadmissibleForest(FracVortexError):
    """A network fails the coverage or component-count constraints."""


class ResolutionError(FracVortexError):
    """The grid spacing is too coarse to resolve a requested geometric feature."""


class TooManyTerminals(FracVortexError):
    """Exact Steiner solve requested for more terminals than supported."""


class InstanceTooLarge(FracVortexError):
    """A combinatorial enumeration would exceed the supported size."""


class WindingObstruction(FracVortexError):
    """A boundary trace cannot be lifted because its winding is nonzero."""


class IllConditioned(FracVortexError):
    """A fit or solve was requested on data too degenerate to resolve."""


class IterationCap(FracVortexError):
    """The sweep limit was reached before the stopping rule fired.

    Carries the best state found so far in ``state``.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
