"""Even power series for the radial reaction coefficient"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.errors import EvennessViolation, NonPositiveDiffusion, ValidationError

logger = logging.getLogger(__name__)

# Inputs are exact polynomial coefficients in practice
DEFAULT_EVENNESS_TOL = 1e-12
SUP_SAMPLES = 1000

ArrayLike = Union[float, np.ndarray]


def _frozen(values: Sequence[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("Series needs a non-empty one-dimensional coefficient list")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EvenPowerSeries:
    """
    Coefficients s_i of sum_i s_i r^(2i) on the unit interval

    For the reaction term the series houses (lambda(r) + c) / epsilon.
    A finite coefficient list is a polynomial, so its radius of
    convergence is infinite unless the caller says otherwise.
    """

    coeffs: np.ndarray
    radius_hint: float = float('inf')

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', _frozen(self.coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, i: int) -> float:
        """Coefficient of r^(2i); zero beyond the stored order"""
        if 0 <= i <= self.order:
            return float(self.coeffs[i])
        return 0.0

    def scaled(self, factor: float) -> 'EvenPowerSeries':
        return EvenPowerSeries(self.coeffs * factor, self.radius_hint)


@dataclass(frozen=True)
class RawSeries:
    """Coefficients of sum_i a_i r^i with mixed parity"""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', _frozen(self.coeffs))

    @classmethod
    def from_even(cls, s: EvenPowerSeries) -> 'RawSeries':
        raw = np.zeros(2 * s.order + 1)
        raw[::2] = s.coeffs
        return cls(raw)


def reaction_series(lambda_even_coeffs: Sequence[float], c: float, epsilon: float) -> EvenPowerSeries:
    """
    Fold c and epsilon into the reaction series

    Args:
        lambda_even_coeffs: coefficients of lambda(r) in powers r^(2i)
        c: target-system damping, c >= 0
        epsilon: diffusion coefficient, epsilon > 0

    Returns:
        Series of (lambda(r) + c) / epsilon
    """
    if epsilon <= 0:
        raise NonPositiveDiffusion(epsilon)
    if c < 0:
        raise ValidationError(f"Target damping c must be >= 0, got {c}")
    coeffs = np.array(lambda_even_coeffs, dtype=float)
    if coeffs.size == 0:
        coeffs = np.zeros(1)
    coeffs = coeffs.copy()
    coeffs[0] += c
    return EvenPowerSeries(coeffs / epsilon)


def validate_even(raw: RawSeries, tol: float = DEFAULT_EVENNESS_TOL) -> EvenPowerSeries:
    """
    Keep the even-indexed coefficients of a mixed-parity series

    Raises:
        EvennessViolation: at the first odd index whose magnitude exceeds tol
    """
    if tol < 0:
        raise ValidationError(f"Evenness tolerance must be >= 0, got {tol}")
    for index in range(1, len(raw.coeffs), 2):
        value = raw.coeffs[index]
        if abs(value) > tol:
            raise EvennessViolation(index, float(value), tol)
    return EvenPowerSeries(raw.coeffs[::2])


def evaluate(s: EvenPowerSeries, r: ArrayLike) -> ArrayLike:
    """Horner evaluation in r^2"""
    r2 = np.asarray(r, dtype=float) ** 2
    acc = np.zeros_like(r2)
    for coeff in s.coeffs[::-1]:
        acc = acc * r2 + coeff
    if np.ndim(r) == 0:
        return float(acc)
    return acc


def integrate(s: EvenPowerSeries, r: ArrayLike) -> ArrayLike:
    """Closed-form integral from 0 to r"""
    i = np.arange(len(s.coeffs))
    antiderivative = EvenPowerSeries(s.coeffs / (2 * i + 1))
    return np.asarray(r, dtype=float) * evaluate(antiderivative, r)


def boundary_series(s: EvenPowerSeries) -> EvenPowerSeries:
    """
    Even series of G(r, r) = -(1/(2r)) * integral_0^r s(sigma) dsigma

    Coefficient i is -s_i / (2(2i+1)).
    """
    i = np.arange(len(s.coeffs))
    return EvenPowerSeries(-s.coeffs / (2.0 * (2 * i + 1)), s.radius_hint)


def sup_on_unit_interval(s: EvenPowerSeries, samples: int = SUP_SAMPLES) -> float:
    """Supremum over [0, 1] from dense sampling plus both endpoints"""
    r = np.concatenate([np.linspace(0.0, 1.0, samples), [0.0, 1.0]])
    return float(np.max(evaluate(s, r)))


def rescale_to_unit_ball(lambda_even_coeffs: Sequence[float], epsilon: float,
                         radius: float) -> Tuple[np.ndarray, float]:
    """
    Map a problem on the ball of radius R onto the unit ball

    With s = r/R the diffusion becomes epsilon/R^2 and lambda(R s) has
    coefficients lambda_i R^(2i). Time is left untouched, so c is unchanged.
    """
    if radius <= 0:
        raise ValidationError(f"Ball radius must be > 0, got {radius}")
    if epsilon <= 0:
        raise NonPositiveDiffusion(epsilon)
    coeffs = np.array(lambda_even_coeffs, dtype=float)
    powers = radius ** (2 * np.arange(len(coeffs)))
    if radius != 1.0:
        logger.info(f"Rescaling problem from radius {radius} to the unit ball")
    return coeffs * powers, epsilon / radius ** 2
