"""Control and observer gains built from solved kernels"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
from scipy.linalg import solve_triangular

from src.errors import DomainViolation, GridMismatch, ValidationError
from src.kernel_solver import KernelCoefficients, evaluate_G, evaluate_K, evaluate_G_grid

if TYPE_CHECKING:
    from src.radial_sim import ModeState

logger = logging.getLogger(__name__)

GAIN_KINDS = ('control', 'observer')
# Relative tolerance when deciding that a node set is the staggered midpoint grid
STAGGER_TOL = 1e-9


def _as_nodes(grid) -> np.ndarray:
    nodes = np.asarray(grid, dtype=float)
    if nodes.ndim != 1 or nodes.size == 0:
        raise DomainViolation("Gain grid must be a non-empty one-dimensional node list")
    if np.any(nodes <= 0) or np.any(nodes > 1.0):
        raise DomainViolation("Gain grid nodes must lie in (0, 1]")
    if np.any(np.diff(nodes) <= 0):
        raise DomainViolation("Gain grid nodes must be strictly increasing")
    return nodes


@dataclass(frozen=True)
class GainTable:
    """Sampled boundary-control kernel K(1, .) or observer injection gain p(.)"""

    kind: str
    n: int
    l: int
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    epsilon: Optional[float] = None
    order: Optional[int] = None

    def __post_init__(self):
        if self.kind not in GAIN_KINDS:
            raise ValidationError(f"Unknown gain kind '{self.kind}', expected one of {GAIN_KINDS}")
        nodes = _as_nodes(self.nodes)
        weights = np.array(self.weights, dtype=float)
        values = np.array(self.values, dtype=float)
        if not (nodes.shape == weights.shape == values.shape):
            raise ValidationError("Gain table nodes, weights and values must have equal lengths")
        for name, arr in (('nodes', nodes), ('weights', weights), ('values', values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def weighted(self) -> np.ndarray:
        """Row vector g with control_value(u) = g . u"""
        return self.weights * self.values

    def metadata(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'n': self.n, 'l': self.l,
                'epsilon': self.epsilon, 'order': self.order}


def quadrature_weights(nodes) -> np.ndarray:
    """
    Weights for integral_0^1 f(rho) d rho sampled at the nodes

    The staggered grid (k + 1/2) h gets the midpoint rule; any other node
    set gets the composite trapezoid rule with f(0) = 0 on the first
    interval, which holds for every K(1, rho).
    """
    nodes = _as_nodes(nodes)
    h = 1.0 / nodes.size
    staggered = (np.arange(nodes.size) + 0.5) * h
    if np.allclose(nodes, staggered, rtol=0.0, atol=STAGGER_TOL * h):
        return np.full(nodes.size, h)
    x = np.concatenate([[0.0], nodes])
    dx = np.diff(x)
    weights = np.zeros(x.size)
    weights[:-1] += dx / 2.0
    weights[1:] += dx / 2.0
    return weights[1:]


def control_gain(k: KernelCoefficients, grid) -> GainTable:
    """
    Boundary-control kernel K(1, rho) on the grid

    Args:
        k: solved kernel for degree l
        grid: radial nodes in (0, 1]

    Returns:
        GainTable of kind 'control'
    """
    nodes = _as_nodes(grid)
    values = evaluate_K(k, np.ones_like(nodes), nodes)
    return GainTable(kind='control', n=k.n, l=k.l, nodes=nodes,
                     weights=quadrature_weights(nodes), values=values, order=k.order)


def control_value(g: GainTable, u: 'ModeState') -> complex:
    """Quadrature of integral_0^1 K(1, rho) u(rho) d rho"""
    nodes = np.asarray(u.grid.nodes)
    if nodes.shape != g.nodes.shape or not np.allclose(nodes, g.nodes, rtol=0.0, atol=1e-14):
        raise GridMismatch(f"State grid ({nodes.size} nodes) differs from gain grid ({g.nodes.size} nodes)")
    return complex(np.dot(g.weighted(), u.values))


def observer_gain(k: KernelCoefficients, epsilon: float, grid) -> GainTable:
    """
    Output-injection gain p(r) = epsilon * G(1, r) * r^l

    Regular form of epsilon * (1/r)^(n-1) * K(1, r); no division by r happens.
    """
    nodes = _as_nodes(grid)
    values = epsilon * np.asarray(evaluate_G(k, np.ones_like(nodes), nodes)) * nodes ** k.l
    return GainTable(kind='observer', n=k.n, l=k.l, nodes=nodes,
                     weights=quadrature_weights(nodes), values=values,
                     epsilon=epsilon, order=k.order)


def volterra_matrix(k: KernelCoefficients, nodes) -> np.ndarray:
    """
    Lower-triangular quadrature matrix Q of the Volterra operator with kernel K

    Q[a, b] = K(r_a, r_b) h for b < a and K(r_a, r_a) h / 2 on the diagonal,
    so that (Q u)_a approximates integral_0^{r_a} K(r_a, rho) u(rho) d rho.
    """
    nodes = _as_nodes(nodes)
    if nodes.size > 1:
        spacing = np.diff(nodes)
        if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
            raise DomainViolation("Volterra quadrature needs a uniform grid")
        h = float(spacing[0])
    else:
        h = 2.0 * float(nodes[0])
    G = evaluate_G_grid(k, nodes, nodes)
    ratio = np.tril(nodes[None, :] / nodes[:, None])
    K = G * nodes[None, :] * ratio ** (k.l + k.n - 2)
    Q = np.tril(K, -1) * h + np.diag(np.diag(K)) * (h / 2.0)
    return Q


def volterra_resolvent(Q: np.ndarray) -> np.ndarray:
    """Discrete resolvent R = Q (I - Q)^-1, the solution of R = Q + Q R"""
    Q = np.asarray(Q, dtype=float)
    identity = np.eye(Q.shape[0])
    return solve_triangular(identity - Q, Q, lower=True)


@dataclass
class InverseKernelTable:
    """Forward and inverse discrete Volterra transformations on one grid"""

    n: int
    l: int
    nodes: np.ndarray
    forward: np.ndarray
    resolvent: np.ndarray

    def apply_forward(self, u: np.ndarray) -> np.ndarray:
        return u - self.forward @ u

    def apply_inverse(self, w: np.ndarray) -> np.ndarray:
        return w + self.resolvent @ w

    def summary(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'l': self.l,
            'points': int(self.nodes.size),
            'max_forward': float(np.max(np.abs(self.forward))) if self.forward.size else 0.0,
            'max_resolvent': float(np.max(np.abs(self.resolvent))) if self.resolvent.size else 0.0,
        }


def inverse_kernel(k: KernelCoefficients, grid) -> InverseKernelTable:
    """Discrete inverse transformation, exact inverse of the forward quadrature on the grid"""
    nodes = _as_nodes(grid)
    Q = volterra_matrix(k, nodes)
    table = InverseKernelTable(n=k.n, l=k.l, nodes=nodes, forward=Q, resolvent=volterra_resolvent(Q))
    logger.debug(f"Inverse kernel l={k.l}: {table.summary()}")
    return table


def kernel_surface(k: KernelCoefficients, samples: int = 41) -> np.ndarray:
    """
    K(r, rho) on the triangle 0 <= rho <= r <= 1, r > 0

    Returns:
        Array of rows (r, rho, K)
    """
    if samples < 2:
        raise ValidationError(f"Kernel surface needs at least 2 samples per axis, got {samples}")
    axis = np.linspace(0.0, 1.0, samples)
    r, rho = np.meshgrid(axis, axis, indexing='ij')
    mask = (rho <= r) & (r > 0)
    r_pts, rho_pts = r[mask], rho[mask]
    values = evaluate_K(k, r_pts, rho_pts)
    return np.column_stack([r_pts, rho_pts, values])
