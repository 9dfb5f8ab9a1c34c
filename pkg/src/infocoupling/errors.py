"""Exception hierarchy for the toolkit.

Two broad families matter to callers: `InputError` (bad data or arguments,
CLI exit code 2) and `NumericalError` (a procedure could not produce a
trustworthy result, CLI exit code 3). `GapDetected` is neither: it reports a
genuine mathematical finding and carries the offending solution with it.
"""


class CouplingError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CouplingError):
    """Invalid data or arguments supplied by the caller."""


class NumericalError(CouplingError):
    """A numerical procedure failed; no partial results are returned."""


class DimensionMismatch(InputError):
    """Operands live on incompatible alphabets or spaces."""


class NonPositiveEntry(InputError):
    """A probability that must be strictly positive is zero or negative."""


class NotNormalized(InputError):
    """Probability mass does not sum to one within tolerance."""


class SingularOutput(InputError):
    """The output distribution has a zero entry; whitening would divide by zero."""


class InvalidEpsilon(InputError):
    """The requested perturbation scale pushes the distribution off the simplex."""


class ZeroPerturbation(InputError):
    """An operation that needs a nonzero perturbation received a zero one."""


class SizeCap(InputError):
    """A tensor-power object would exceed the configured size limit."""


class BasisMismatch(InputError):
    """Two decompositions do not share the required common structure."""


class EmptyInput(InputError):
    """A collection argument that must be nonempty is empty."""


class InvalidK(InputError):
    """Receiver count outside the supported range."""


class ParseError(InputError):
    """A specification file could not be parsed; message carries the location."""


class UsageError(InputError):
    """The command does not apply to the given input (e.g. wrong channel count)."""


class ConvergenceFailure(NumericalError):
    """An iterative numerical routine did not converge."""


class FeasibilityFailure(NumericalError):
    """The ensemble feasibility program could not equalize the active channels.

    `spread` holds the residual spread of the per-channel values, which
    signals how inaccurate the dual optimum was.
    """

    def __init__(self, message, spread=None):
        super().__init__(message)
        self.spread = spread


class GapDetected(CouplingError):
    """A two-receiver instance shows primal/dual disagreement above tolerance.

    This is surfaced as a finding, never swallowed: `solution` carries the
    full solver output and `instance` the offending inputs so the case can be
    logged and reproduced.
    """

    def __init__(self, message, solution=None, instance=None):
        super().__init__(message)
        self.solution = solution
        self.instance = instance
