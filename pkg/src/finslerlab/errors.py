"""Exception types raised by the laboratory.

Every failure mode that a caller can sensibly react to gets its own class;
all inherit from FinslerLabError so a harness can catch the lot.
"""


class FinslerLabError(Exception):
    """Base class for all errors raised by this package."""


class ZeroDirection(FinslerLabError):
    """A fiber operation was asked to evaluate at y ~ 0."""


class NotPositiveDefinite(FinslerLabError):
    """A fundamental tensor failed its Cholesky factorization."""


class NonConvergence(FinslerLabError):
    """An iterative refinement exceeded its iteration cap."""


class NewtonDivergence(FinslerLabError):
    """The inverse Legendre Newton iteration failed to converge."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DegenerateSample(FinslerLabError):
    """A sampling set collapsed (e.g. all test vectors ~ 0)."""


class LeftDomain(FinslerLabError):
    """A geodesic exited the chart; carries the exit time."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class StencilUnstable(FinslerLabError):
    """Nested finite differences disagreed across step sizes."""

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates


class NonPositiveDensity(FinslerLabError):
    """A measure density evaluated to a non-positive value."""


class InvalidN(FinslerLabError):
    """Weighted Ricci requested at the forbidden effective dimension N = n."""


class SourceOutsideDomain(FinslerLabError):
    """A distance-field source lies outside the grid."""


class TouchesBoundary(FinslerLabError):
    """A neighborhood or ball reached the chart boundary; result would be biased."""


class WindowOutsideDomain(FinslerLabError):
    """An entropy fit window needs balls larger than the domain holds."""


class EmptyInput(FinslerLabError):
    """An operation received an empty mask or sample set."""


class EmptyInterior(FinslerLabError):
    """An eigenvalue solve was asked on a mask without interior cells."""


class MonotonicityViolation(FinslerLabError):
    """Eigenvalues failed domain monotonicity beyond solver tolerance."""


class SupportTooLarge(FinslerLabError):
    """A discrete measure exceeds the exact-solver support cap."""


class InfeasibleMarginals(FinslerLabError):
    """Coupling marginals are not normalized probability weights."""


class SingularPart(FinslerLabError):
    """A measure puts mass where the reference measure has none."""


class PathNotFound(FinslerLabError):
    """No grid path connects two coupled support points."""


class ConfigInvalid(FinslerLabError):
    """Scenario configuration failed validation; carries field messages."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        super().__init__("; ".join(messages))
        self.messages = list(messages)


class IoFailure(FinslerLabError):
    """Report emission could not write its files."""
