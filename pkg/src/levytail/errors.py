"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its stable exit-code contract without inspecting messages.
"""


class LevyTailError(Exception):
    exit_code = 3


class InputError(LevyTailError, ValueError):
    """Malformed or invalid user input (model files, parameters)."""

    exit_code = 2


class NumericalError(LevyTailError, ArithmeticError):
    exit_code = 3


class InfeasibleError(LevyTailError):
    """The requested computation cannot be carried out on the given grid."""

    exit_code = 4


# levy_model

class InvalidParams(InputError):
    pass


class InvalidInput(InputError):
    pass


class DivergentLevyMeasure(NumericalError):
    pass


class EmptyTail(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


# convolution_engine

class IncompatibleGrids(InputError):
    pass


class TruncationInsufficient(NumericalError):
    pass


class ClampTooLarge(NumericalError):
    """FFT round-off produced more negative mass than the clamp budget allows."""


class SeriesDiverges(LevyTailError):
    exit_code = 5


# charfn

class QuadratureFailure(NumericalError):
    pass


class NotAbsolutelyIntegrable(InfeasibleError):
    pass


class ZeroCrossing(NumericalError):
    pass


class TiltDiverges(NumericalError):
    pass


# tail_diagnostics

class WindowUnderflow(InfeasibleError):
    pass


class ZeroPositiveMass(InfeasibleError):
    pass


class HypothesisViolated(InputError):
    pass


# counterexample_lab

class GridInfeasible(InfeasibleError):
    pass


# mle

class CutoffRequired(InputError):
    pass


class DensityUnderflow(NumericalError):
    pass


class HypothesisCheckFailed(InfeasibleError):
    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic
