"""Exception hierarchy for gain computation and simulation"""


class BallControlError(Exception):
    """Base class for every error raised by the ballstep package"""

    exit_code = 1


class ValidationError(BallControlError):
    """Input, configuration or domain problem (CLI exit code 2)"""

    exit_code = 2


class NumericalError(BallControlError):
    """Numerical failure during a solve or a self-check (CLI exit code 3)"""

    exit_code = 3


class NonPositiveDiffusion(ValidationError):
    """Diffusion coefficient epsilon must be strictly positive"""

    def __init__(self, epsilon: float):
        super().__init__(f"Diffusion coefficient must be > 0, got epsilon={epsilon}")
        self.epsilon = epsilon


class EvennessViolation(ValidationError):
    """Reaction series carries an odd power, so no power-series kernel exists for large l"""

    def __init__(self, index: int, value: float, tol: float):
        super().__init__(
            f"Reaction coefficient of r^{index} is {value:.6g} (tolerance {tol:.1e}); "
            f"odd powers make the kernel equations incompatible for large harmonic degree"
        )
        self.index = index
        self.value = value
        self.tol = tol


class DomainViolation(ValidationError):
    """Evaluation point outside the triangle 0 <= rho <= r <= 1 or a grid outside (0, 1]"""


class GridMismatch(ValidationError):
    """State and gain table live on different radial grids"""


class BandLimitMismatch(ValidationError):
    """Mode set and angular grid disagree on band limit or dimension"""


class UnderResolvedGrid(ValidationError):
    """Angular grid has too few nodes for the requested band limit"""


class OrderOverflow(ValidationError):
    """Requested truncation order exceeds the configured cap"""

    def __init__(self, order: int, cap: int):
        super().__init__(f"Truncation order {order} exceeds configured cap {cap}")
        self.order = order
        self.cap = cap


class MissingKernel(ValidationError):
    """A controlled degree has no kernel"""

    def __init__(self, degree: int):
        super().__init__(f"No kernel available for controlled degree l={degree}")
        self.degree = degree


class ConfigError(ValidationError):
    """Run configuration failed schema validation"""

    def __init__(self, key: str, message: str):
        super().__init__(f"Invalid configuration at '{key}': {message}")
        self.key = key


class LinearSolveFailure(NumericalError):
    """Time-stepping system could not be factorized or solved"""


class ResidualCheckFailure(NumericalError):
    """A solved kernel failed its residual self-check"""
