"""Exception taxonomy shared by every module in the package."""


class NetwatermarkError(Exception):
    """Base class for all package errors."""


class DimensionError(NetwatermarkError, ValueError):
    """Matrix or block dimensions are inconsistent."""


class InputError(NetwatermarkError, ValueError):
    """An argument is invalid for reasons other than shape."""


class StabilityError(NetwatermarkError):
    """An operation required a Schur-stable matrix and did not get one."""


class SynthesisError(NetwatermarkError):
    """Gain synthesis failed (uncontrollable pair, empty shared range, ...)."""


class ConditionViolationError(SynthesisError):
    """Some subcontroller's watermark never reaches some output block.

    Carries the 0-based pair (i, j) for which C_j (A+BK)^k B_i vanishes for
    every k up to the state dimension minus one.
    """

    def __init__(self, i: int, j: int, message: str | None = None):
        self.i = i
        self.j = j
        if message is None:
            message = (
                f"watermark of subcontroller {i} never reaches the output "
                f"of subcontroller {j}: C_{j} (A+BK)^k B_{i} = 0 for every "
                f"admissible lag k"
            )
        super().__init__(message)


class DivergenceError(NetwatermarkError):
    """Simulated state left the finite range the integrator allows."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        if message is None:
            message = f"state diverged at step {step}"
        super().__init__(message)


class DegenerateWindowError(NetwatermarkError):
    """A scatter matrix was singular, so its log-determinant is undefined."""


class ModelError(NetwatermarkError):
    """A detector's scale matrix is singular or otherwise unusable."""


class NotCalibratedError(NetwatermarkError):
    """A decision was requested before a threshold was calibrated."""


class TraceRangeError(NetwatermarkError, IndexError):
    """A test statistic was requested outside the recorded trace range."""


class ScenarioError(NetwatermarkError, ValueError):
    """A scenario document failed to parse or validate."""
