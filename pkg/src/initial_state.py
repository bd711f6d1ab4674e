"""Seeded initial fields and observer noise"""

import logging
from typing import Any, Dict, Tuple

import numpy as np

from src.errors import ValidationError
from src.harmonics import AngularGrid, ModeSet, admissible_modes, analyze, synthesize
from src.radial_sim import RadialGrid

logger = logging.getLogger(__name__)


def _constant_coefficient(n: int) -> float:
    """Coefficient of the (0, 0) mode for a unit constant field"""
    return np.sqrt(4.0 * np.pi) if n == 3 else np.sqrt(2.0 * np.pi)


def random_initial_modes(n: int, band_limit: int, grid: RadialGrid, angular: AngularGrid,
                         rng: np.random.Generator, low: float = 0.0,
                         high: float = 10.0) -> Tuple[ModeSet, Dict[str, Any]]:
    """
    Random smooth field spanning exactly [low, high] on the sampling grid

    Each profile is c_lm(r) = r^l (g1 + g2 (1 - r^2)) with complex normal
    g1, g2, conjugate-symmetric in m so the field is real. The field is then
    scaled and shifted; the shift only touches the (0, 0) mode.

    Returns:
        (ModeSet of radial profiles, law metadata)
    """
    if high <= low:
        raise ValidationError(f"Initial field range must satisfy low < high, got [{low}, {high}]")
    r = grid.nodes
    coeffs = {}
    for l, m in admissible_modes(n, band_limit):
        if m < 0:
            continue
        if m == 0:
            g1, g2 = rng.standard_normal(2)
        else:
            g1, g2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        coeffs[(l, m)] = r ** l * (g1 + g2 * (1.0 - r ** 2))
    for l, m in admissible_modes(n, band_limit):
        if m < 0:
            # circle basis carries no (-1)^m phase
            sign = (-1.0) ** m if n == 3 else 1.0
            coeffs[(l, m)] = sign * np.conj(coeffs[(l, -m)])
    modes = ModeSet(n, band_limit, coeffs)

    field = synthesize(modes, angular).real
    lo, hi = float(field.min()), float(field.max())
    scale = (high - low) / (hi - lo) if hi > lo else 1.0
    shift = low - scale * lo
    scaled = {key: scale * value for key, value in modes.coefficients.items()}
    scaled[(0, 0)] = scaled[(0, 0)] + shift * _constant_coefficient(n)
    law = {
        'profile': 'r^l (g1 + g2 (1 - r^2)), g1, g2 standard complex normal',
        'range': [low, high],
        'scale': scale,
        'shift': shift,
        'radial_points': grid.m_points,
        'angular_shape': list(angular.shape),
    }
    logger.info(f"Initial field: {len(scaled)} modes, scale={scale:.6g}, shift={shift:.6g}")
    return ModeSet(n, band_limit, scaled), law


def observer_noise_modes(n: int, band_limit: int, grid: RadialGrid, angular: AngularGrid,
                         rng: np.random.Generator, sigma2: float = 0.5) -> ModeSet:
    """Pointwise N(0, sigma2) noise at every grid point, projected onto the harmonics up to band_limit"""
    if sigma2 < 0:
        raise ValidationError(f"Noise variance must be >= 0, got {sigma2}")
    noise = rng.normal(0.0, np.sqrt(sigma2), size=angular.shape + (grid.m_points,))
    return analyze(noise, angular, band_limit)
