"""Spherical-harmonic synthesis and analysis for n = 2 and n = 3"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import BandLimitMismatch, UnderResolvedGrid, ValidationError

logger = logging.getLogger(__name__)

SUPPORTED_DIMENSIONS = (2, 3)

Mode = Tuple[int, int]


def _check_dimension(n: int):
    if n not in SUPPORTED_DIMENSIONS:
        raise ValidationError(f"Field assembly supports n in {SUPPORTED_DIMENSIONS}, got n={n}")


def admissible_modes(n: int, band_limit: int) -> List[Mode]:
    """
    All (l, m) with l <= band_limit, in (l, m) order

    n = 3 has the 2l + 1 orders |m| <= l; on the circle degree l has
    only m = -l and m = +l.
    """
    _check_dimension(n)
    if band_limit < 0:
        raise ValidationError(f"Band limit must be >= 0, got {band_limit}")
    if n == 3:
        return [(l, m) for l in range(band_limit + 1) for m in range(-l, l + 1)]
    return [(0, 0)] + [(l, m) for l in range(1, band_limit + 1) for m in (-l, l)]


def assoc_legendre(l: int, m: int, s):
    """
    P_lm(s) = (1 - s^2)^(m/2) d^m/ds^m P_l(s), without the (-1)^m phase

    Three-term recurrence in l starting from P_mm = (2m-1)!! (1-s^2)^(m/2).
    """
    if not 0 <= m <= l:
        raise ValidationError(f"assoc_legendre needs 0 <= m <= l, got l={l}, m={m}")
    s = np.asarray(s, dtype=float)
    x = np.sqrt(np.clip(1.0 - s ** 2, 0.0, None))
    p_mm = np.ones_like(s)
    for k in range(1, m + 1):
        p_mm = p_mm * (2 * k - 1) * x
    if l == m:
        return p_mm if p_mm.ndim else float(p_mm)
    p_prev, p_curr = p_mm, s * (2 * m + 1) * p_mm
    for k in range(m + 2, l + 1):
        p_prev, p_curr = p_curr, ((2 * k - 1) * s * p_curr - (k + m - 1) * p_prev) / (k - m)
    return p_curr if p_curr.ndim else float(p_curr)


def normalized_legendre(lmax: int, s) -> np.ndarray:
    """
    Table Q[l, m] = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_lm(s), zero for m > l

    Args:
        lmax: highest degree
        s: cos(theta1) values in [-1, 1]

    Returns:
        Array of shape (lmax+1, lmax+1) + shape(s)
    """
    s = np.asarray(s, dtype=float)
    x = np.sqrt(np.clip(1.0 - s ** 2, 0.0, None))
    Q = np.zeros((lmax + 1, lmax + 1) + s.shape)
    Q[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        Q[m, m] = Q[m - 1, m - 1] * x * np.sqrt((2 * m + 1) / (2.0 * m))
    for m in range(lmax):
        Q[m + 1, m] = s * np.sqrt(2 * m + 3) * Q[m, m]
    for m in range(lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            Q[l, m] = a * (s * Q[l - 1, m] - b * Q[l - 2, m])
    return Q


def sph_harm(l: int, m: int, theta1, theta2):
    """
    Y_lm(theta1, theta2) = (-1)^m sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_lm(cos theta1) e^(i m theta2)

    Negative orders follow Y_{l,-m} = (-1)^m conj(Y_lm).
    """
    if abs(m) > l:
        raise ValidationError(f"sph_harm needs |m| <= l, got l={l}, m={m}")
    theta1, theta2 = np.broadcast_arrays(np.asarray(theta1, dtype=float), np.asarray(theta2, dtype=float))
    Q = normalized_legendre(l, np.cos(theta1))[l, abs(m)]
    sign = (-1.0) ** m if m >= 0 else 1.0
    value = sign * Q * np.exp(1j * m * theta2)
    return value if value.ndim else complex(value)


def basis_matrix(n: int, band_limit: int, theta1: np.ndarray, theta2: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Basis functions at the given points, columns in admissible_modes order

    For n = 2 only theta1 (the circle angle) is used.
    """
    modes = admissible_modes(n, band_limit)
    theta1 = np.asarray(theta1, dtype=float).ravel()
    if n == 2:
        return np.column_stack([np.exp(1j * m * theta1) / np.sqrt(2.0 * np.pi) for _, m in modes])
    theta2 = np.asarray(theta2, dtype=float).ravel()
    Q = normalized_legendre(band_limit, np.cos(theta1))
    columns = []
    for l, m in modes:
        sign = (-1.0) ** m if m >= 0 else 1.0
        columns.append(sign * Q[l, abs(m)] * np.exp(1j * m * theta2))
    return np.column_stack(columns)


@dataclass(frozen=True)
class AngularGrid:
    """
    Quadrature grid on the sphere (n = 3) or the circle (n = 2)

    n = 3 uses Gauss-Legendre nodes in cos(theta1) times equispaced theta2.
    """

    n: int
    theta1: np.ndarray
    theta2: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_band_limit(cls, n: int, band_limit: int) -> 'AngularGrid':
        _check_dimension(n)
        count = 2 * band_limit + 2
        return cls.with_counts(n, count, count)

    @classmethod
    def with_counts(cls, n: int, n_polar: int, n_azimuth: int = 0) -> 'AngularGrid':
        _check_dimension(n)
        if n == 2:
            angles = 2.0 * np.pi * np.arange(n_polar) / n_polar
            return cls(n=2, theta1=angles, theta2=np.zeros(0), weights=np.full(n_polar, 2.0 * np.pi / n_polar))
        x, w = np.polynomial.legendre.leggauss(n_polar)
        # Polar angle increasing from the north pole
        theta1 = np.arccos(x[::-1])
        w = w[::-1]
        theta2 = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
        weights = np.outer(w, np.full(n_azimuth, 2.0 * np.pi / n_azimuth))
        return cls(n=3, theta1=theta1, theta2=theta2, weights=weights)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.weights.shape

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Flattened (theta1, theta2) of every grid point in C order"""
        if self.n == 2:
            return self.theta1, np.zeros_like(self.theta1)
        t1, t2 = np.meshgrid(self.theta1, self.theta2, indexing='ij')
        return t1.ravel(), t2.ravel()

    def max_band_limit(self) -> int:
        """Largest S with node counts >= 2S + 2"""
        counts = self.shape
        return (min(counts) - 2) // 2

    def resolves(self, band_limit: int) -> bool:
        return band_limit <= self.max_band_limit()

    def basis(self, band_limit: int) -> np.ndarray:
        t1, t2 = self.points()
        return basis_matrix(self.n, band_limit, t1, t2)


@dataclass
class ModeSet:
    """Harmonic coefficients c_lm, scalars or radial profiles, for every admissible (l, m)"""

    n: int
    band_limit: int
    coefficients: Dict[Mode, np.ndarray]

    def __post_init__(self):
        expected = set(admissible_modes(self.n, self.band_limit))
        present = set(self.coefficients)
        if present != expected:
            missing = sorted(expected - present)[:5]
            extra = sorted(present - expected)[:5]
            raise BandLimitMismatch(
                f"Mode set for S={self.band_limit}, n={self.n} is inconsistent (missing {missing}, unexpected {extra})"
            )
        self.coefficients = {key: np.asarray(value, dtype=complex) for key, value in self.coefficients.items()}

    @classmethod
    def zeros(cls, n: int, band_limit: int, radial_points: Optional[int] = None) -> 'ModeSet':
        shape = () if radial_points is None else (radial_points,)
        return cls(n, band_limit, {key: np.zeros(shape, dtype=complex) for key in admissible_modes(n, band_limit)})

    def keys(self) -> List[Mode]:
        return admissible_modes(self.n, self.band_limit)

    def stacked(self) -> np.ndarray:
        """Coefficients as an array of shape (modes,) + trailing"""
        return np.stack([self.coefficients[key] for key in self.keys()])

    @classmethod
    def from_stacked(cls, n: int, band_limit: int, stacked: np.ndarray) -> 'ModeSet':
        keys = admissible_modes(n, band_limit)
        return cls(n, band_limit, {key: stacked[i] for i, key in enumerate(keys)})

    def at_radius(self, r: float, radial_nodes: np.ndarray) -> 'ModeSet':
        """Scalar coefficients at radius r, linearly interpolated between radial nodes"""
        radial_nodes = np.asarray(radial_nodes, dtype=float)
        out = {}
        for key, values in self.coefficients.items():
            if values.shape != radial_nodes.shape:
                raise BandLimitMismatch(f"Mode {key} is not sampled on the given radial nodes")
            out[key] = np.interp(r, radial_nodes, values.real) + 1j * np.interp(r, radial_nodes, values.imag)
        return ModeSet(self.n, self.band_limit, out)

    def squared_norm(self) -> float:
        return float(sum(np.sum(np.abs(v) ** 2) for v in self.coefficients.values()))


def synthesize(modes: ModeSet, grid: AngularGrid, r: Optional[float] = None,
               radial_nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Field sum_{l, m} c_lm Y_lm on the angular grid

    Scalar coefficients give a field of grid.shape; radial profiles give
    grid.shape + (radial points,) unless r selects one radius.
    """
    if modes.n != grid.n:
        raise BandLimitMismatch(f"Mode set is for n={modes.n} but the grid is for n={grid.n}")
    if r is not None:
        if radial_nodes is None:
            raise ValidationError("Synthesis at a radius needs the radial nodes")
        modes = modes.at_radius(r, radial_nodes)
    stacked = modes.stacked()
    trailing = stacked.shape[1:]
    field = grid.basis(modes.band_limit) @ stacked.reshape(stacked.shape[0], -1)
    return field.reshape(grid.shape + trailing)


def analyze(field: np.ndarray, grid: AngularGrid, band_limit: int) -> ModeSet:
    """
    Coefficients <field, Y_lm> by quadrature on the grid

    Trailing axes beyond grid.shape (radial nodes) are carried through.
    """
    if not grid.resolves(band_limit):
        raise UnderResolvedGrid(
            f"Angular grid {grid.shape} resolves band limit {grid.max_band_limit()}, requested {band_limit}"
        )
    field = np.asarray(field)
    if field.shape[:len(grid.shape)] != grid.shape:
        raise BandLimitMismatch(f"Field of shape {field.shape} does not match grid {grid.shape}")
    trailing = field.shape[len(grid.shape):]
    flat = field.reshape(int(np.prod(grid.shape)), -1)
    weighted = grid.weights.reshape(-1, 1) * flat
    coeffs = grid.basis(band_limit).conj().T @ weighted
    return ModeSet.from_stacked(grid.n, band_limit, coeffs.reshape((coeffs.shape[0],) + trailing))


def field_l2(field: np.ndarray, grid: AngularGrid) -> float:
    """sqrt of the quadrature of |field|^2 over the sphere or circle"""
    field = np.asarray(field)
    if field.shape != grid.shape:
        raise BandLimitMismatch(f"Field of shape {field.shape} does not match grid {grid.shape}")
    return float(np.sqrt(np.sum(grid.weights * np.abs(field) ** 2)))
