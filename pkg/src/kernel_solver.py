"""Power-series solver for the backstepping kernel on the n-ball"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np
from scipy.special import gammaln
from tqdm import tqdm

from src.errors import DomainViolation, OrderOverflow, ValidationError
from src.series import EvenPowerSeries, RawSeries, boundary_series, evaluate

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 15
DEFAULT_MAX_ORDER = 400
# Row-wise self-check of the recurrence
SOLVER_TOL = 1e-12
# Matched-degree PDE residual relative to max|C|
RESIDUAL_TOL = 1e-10
# Slack for evaluation points that sit on the triangle edge up to round-off
EDGE_SLACK = 1e-12

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class KernelCoefficients:
    """
    Triangular coefficients of G(r, rho) = sum_i sum_{j<=i} C[i][j] r^(2j) rho^(2(i-j))

    C is stored as a square (order+1) x (order+1) array with zeros above
    the diagonal.
    """

    n: int
    l: int
    gamma_prime: float
    order: int
    C: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.C, dtype=float)
        coeffs.setflags(write=False)
        object.__setattr__(self, 'C', coeffs)

    def diagonal_layout(self) -> np.ndarray:
        """M[j, p] = C[j+p][j], the coefficient of r^(2j) rho^(2p)"""
        size = self.order + 1
        M = np.zeros((size, size))
        for i in range(size):
            j = np.arange(i + 1)
            M[j, i - j] = self.C[i, :i + 1]
        return M


@dataclass
class ResidualReport:
    """Residual diagnostics of a solved kernel against the kernel PDE and its boundary condition"""

    max_pde_residual: float
    max_boundary_residual: float
    sample_grid: str
    per_degree_residuals: List[float] = field(default_factory=list)
    relative_matched_residual: float = 0.0
    n: int = 0
    l: int = 0
    order: int = 0

    def passed(self, tol: float) -> bool:
        return self.relative_matched_residual <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'l': self.l,
            'order': self.order,
            'max_pde_residual': self.max_pde_residual,
            'max_boundary_residual': self.max_boundary_residual,
            'relative_matched_residual': self.relative_matched_residual,
            'sample_grid': self.sample_grid,
            'per_degree_residuals': list(self.per_degree_residuals),
        }


def gamma_prime_of(n: int, l: int) -> float:
    return n / 2.0 + l - 1.0


def a_coeff(i: int, j: int, gamma_prime: float) -> float:
    """a_ij = (j+1)(j+1-g') / ((i-j)(i-j+g')) for 0 <= j < i"""
    if not 0 <= j < i:
        raise ValidationError(f"a_coeff needs 0 <= j < i, got i={i}, j={j}")
    return (j + 1) * (j + 1 - gamma_prime) / ((i - j) * (i - j + gamma_prime))


def kappa(i: int, gamma_prime: float) -> float:
    """
    Closing coefficient (2i)!/i! * Gamma(g'+1)/Gamma(i+g'+1)

    Evaluated in log space so large i does not overflow; always positive.
    """
    if i == 0:
        return 1.0
    log_value = (gammaln(2 * i + 1) - gammaln(i + 1)
                 + gammaln(gamma_prime + 1) - gammaln(i + gamma_prime + 1))
    return float(np.exp(log_value))


def kappa_product_form(i: int, gamma_prime: float) -> float:
    """1 + sum_{j<i} prod_{k=j}^{i-1} a_ik, the defining sum-of-products form"""
    total = 1.0
    prod = 1.0
    for k in range(i - 1, -1, -1):
        prod *= a_coeff(i, k, gamma_prime)
        total += prod
    return total


def _reaction_vector(reaction: EvenPowerSeries, order: int) -> np.ndarray:
    lam = np.zeros(order + 1)
    stored = min(order, reaction.order) + 1
    lam[:stored] = reaction.coeffs[:stored]
    return lam


def solve_kernel(reaction: EvenPowerSeries, n: int, l: int, order: int = DEFAULT_ORDER,
                 max_order: int = DEFAULT_MAX_ORDER) -> KernelCoefficients:
    """
    Solve the even-power kernel series row by row

    Row i follows from rows < i: each C[i][j] is written as
    alpha_j * C[i][i] + beta_j by back-substitution through
    C[i][j] = a_ij C[i][j+1] + Bhat_j, the row-sum condition then fixes
    C[i][i] = -(lambda_i / (2(2i+1)) + sum beta) / kappa(i, g').

    Args:
        reaction: series of (lambda + c) / epsilon, already checked for evenness
        n: ball dimension (>= 2)
        l: harmonic degree (>= 0)
        order: truncation order N
        max_order: cap on N

    Returns:
        Solved KernelCoefficients
    """
    if n < 2:
        raise ValidationError(f"Ball dimension must be >= 2, got n={n}")
    if l < 0:
        raise ValidationError(f"Harmonic degree must be >= 0, got l={l}")
    if order < 0:
        raise ValidationError(f"Truncation order must be >= 0, got {order}")
    if order > max_order:
        raise OrderOverflow(order, max_order)
    if not reaction.radius_hint > 1.0:
        raise ValidationError(
            f"Reaction series must converge beyond the unit ball (radius hint {reaction.radius_hint})"
        )

    gp = gamma_prime_of(n, l)
    lam = _reaction_vector(reaction, order)
    C = np.zeros((order + 1, order + 1))
    C[0, 0] = -lam[0] / 2.0

    for i in range(1, order + 1):
        j = np.arange(i)
        # B_{(i-1)j} = sum_{k=j}^{i-1} C[k][j] lambda_{i-1-k}
        B = (lam[i - 1::-1][:, None] * C[:i, :i]).sum(axis=0)
        denom = (i - j) * (i - j + gp)
        b_hat = -B / (4.0 * denom)
        a = (j + 1) * (j + 1 - gp) / denom

        beta = np.empty(i)
        beta_next = 0.0
        for jj in range(i - 1, -1, -1):
            beta_next = a[jj] * beta_next + b_hat[jj]
            beta[jj] = beta_next

        h_i = beta.sum()
        C[i, i] = -(lam[i] / (2.0 * (2 * i + 1)) + h_i) / kappa(i, gp)
        for jj in range(i - 1, -1, -1):
            C[i, jj] = a[jj] * C[i, jj + 1] + b_hat[jj]

    return KernelCoefficients(n=n, l=l, gamma_prime=gp, order=order, C=C)


def constraint_residuals(k: KernelCoefficients, reaction: EvenPowerSeries) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-row relative residuals of the row-sum and recurrence constraints

    Row-sum residuals are scaled by max|C| in the row, recurrence residuals
    by the magnitude of the terms entering that row's equations.
    """
    lam = _reaction_vector(reaction, k.order)
    gp = k.gamma_prime
    row_sum = np.zeros(k.order + 1)
    recurrence = np.zeros(k.order + 1)
    for i in range(k.order + 1):
        row = k.C[i, :i + 1]
        scale = max(np.max(np.abs(row)), np.finfo(float).tiny)
        target = -lam[i] / (2.0 * (2 * i + 1))
        row_sum[i] = abs(row.sum() - target) / max(scale, abs(target))
        if i == 0:
            continue
        j = np.arange(i)
        B = (lam[i - 1::-1][:, None] * k.C[:i, :i]).sum(axis=0)
        upper = 4.0 * (j + 1) * (j + 1 - gp) * k.C[i, j + 1]
        lower = 4.0 * (i - j) * (i - j + gp) * k.C[i, j]
        terms = np.abs(upper) + np.abs(lower) + np.abs(B)
        recurrence[i] = np.max(np.abs(upper - lower - B)) / max(np.max(terms), np.finfo(float).tiny)
    return row_sum, recurrence


def _check_triangle(r: np.ndarray, rho: np.ndarray):
    if np.any(rho < -EDGE_SLACK) or np.any(rho > r + EDGE_SLACK) or np.any(r > 1.0 + EDGE_SLACK):
        raise DomainViolation("Kernel evaluation needs 0 <= rho <= r <= 1")


def _powers(x2: np.ndarray, order: int) -> np.ndarray:
    """x2^0 .. x2^order stacked along a trailing axis, built by repeated multiplication"""
    out = np.ones(x2.shape + (order + 1,))
    for p in range(1, order + 1):
        out[..., p] = out[..., p - 1] * x2
    return out


def evaluate_G(k: KernelCoefficients, r: ArrayLike, rho: ArrayLike) -> ArrayLike:
    """Evaluate the kernel series at points of the triangle 0 <= rho <= r <= 1"""
    r_arr, rho_arr = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(rho, dtype=float))
    _check_triangle(r_arr, rho_arr)
    value = np.einsum('...j,jp,...p->...', _powers(r_arr ** 2, k.order), k.diagonal_layout(),
                      _powers(rho_arr ** 2, k.order))
    if value.ndim == 0:
        return float(value)
    return value


def evaluate_G_grid(k: KernelCoefficients, r_nodes: np.ndarray, rho_nodes: np.ndarray) -> np.ndarray:
    """
    G on the tensor grid r_nodes x rho_nodes

    Entries with rho > r lie outside the kernel's domain and are set to 0.
    """
    r_nodes = np.asarray(r_nodes, dtype=float)
    rho_nodes = np.asarray(rho_nodes, dtype=float)
    if np.any(r_nodes > 1.0 + EDGE_SLACK) or np.any(r_nodes < 0) or np.any(rho_nodes < 0):
        raise DomainViolation("Kernel grid nodes must lie in [0, 1]")
    values = _powers(r_nodes ** 2, k.order) @ k.diagonal_layout() @ _powers(rho_nodes ** 2, k.order).T
    values[rho_nodes[None, :] > r_nodes[:, None] + EDGE_SLACK] = 0.0
    return values


def evaluate_K(k: KernelCoefficients, r: ArrayLike, rho: ArrayLike) -> ArrayLike:
    """K(r, rho) = G(r, rho) * rho * (rho / r)^(l+n-2), r > 0"""
    r_arr, rho_arr = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(rho, dtype=float))
    if np.any(r_arr <= 0):
        raise DomainViolation("K(r, rho) is only defined for r > 0")
    G = np.asarray(evaluate_G(k, r_arr, rho_arr))
    value = G * rho_arr * (rho_arr / r_arr) ** (k.l + k.n - 2)
    if value.ndim == 0:
        return float(value)
    return value


def _polynomial_residual(k: KernelCoefficients, reaction: EvenPowerSeries) -> np.ndarray:
    """
    Coefficients Res[j, p] of r^(2j) rho^(2p) in
    s(rho) G - (D1 + D2) G, with D1 r^(2j) = 4j(j-g') r^(2j-2)
    and D2 rho^(2p) = -4p(p+g') rho^(2p-2)
    """
    M = k.diagonal_layout()
    gp = k.gamma_prime
    size = k.order + 1
    lam = reaction.coeffs
    width = size + len(lam) - 1
    res = np.zeros((width, width))
    for j in range(size):
        res[j, :width] += np.convolve(M[j], lam)
    jj = np.arange(size)[:, None]
    pp = np.arange(size)[None, :]
    d1 = 4.0 * jj * (jj - gp) * M
    d2 = -4.0 * pp * (pp + gp) * M
    res[:size - 1, :size] -= d1[1:, :]
    res[:size, :size - 1] -= d2[:, 1:]
    return res


def pde_residual(k: KernelCoefficients, reaction: EvenPowerSeries,
                 samples: int = 41) -> ResidualReport:
    """
    Residual of the kernel PDE and of the boundary condition

    The PDE residual is formed exactly as a polynomial in (r^2, rho^2);
    total degrees below the truncation order cancel by construction,
    higher ones carry the truncation error.
    """
    res = _polynomial_residual(k, reaction)
    width = res.shape[0]
    per_degree = []
    for d in range(2 * width - 1):
        j = np.arange(max(0, d - width + 1), min(d, width - 1) + 1)
        per_degree.append(float(np.max(np.abs(res[j, d - j]))) if j.size else 0.0)
    while len(per_degree) > 1 and per_degree[-1] == 0.0:
        per_degree.pop()

    c_scale = max(float(np.max(np.abs(k.C))), np.finfo(float).tiny)
    matched = per_degree[:k.order]
    relative_matched = max(matched) / c_scale if matched else 0.0

    # Interior sample of the triangle
    r_s, rho_s = np.meshgrid(np.linspace(0.0, 1.0, samples), np.linspace(0.0, 1.0, samples), indexing='ij')
    mask = rho_s <= r_s
    r_pts, rho_pts = r_s[mask], rho_s[mask]
    r_pow = _powers(r_pts ** 2, width - 1)
    rho_pow = _powers(rho_pts ** 2, width - 1)
    interior = np.einsum('sj,jp,sp->s', r_pow, res, rho_pow)

    r_line = np.linspace(0.0, 1.0, 10 * samples)
    boundary = np.asarray(evaluate_G(k, r_line, r_line)) - evaluate(boundary_series(reaction), r_line)

    return ResidualReport(
        max_pde_residual=float(np.max(np.abs(interior))),
        max_boundary_residual=float(np.max(np.abs(boundary))),
        sample_grid=(f"{mask.sum()} points on a {samples}x{samples} lattice of the triangle "
                     f"0<=rho<=r<=1; {r_line.size} points on the diagonal"),
        per_degree_residuals=per_degree,
        relative_matched_residual=relative_matched,
        n=k.n,
        l=k.l,
        order=k.order,
    )


def dense_kernel_oracle(reaction: EvenPowerSeries, n: int, l: int, order: int) -> KernelCoefficients:
    """
    Solve the even-power coefficient system as one dense linear system

    Equations are assembled by applying the kernel operator to each unit
    monomial, independently of the row recurrence.
    """
    gp = gamma_prime_of(n, l)
    lam = _reaction_vector(reaction, order)
    unknowns = [(i, j) for i in range(order + 1) for j in range(i + 1)]
    index = {key: pos for pos, key in enumerate(unknowns)}
    # PDE equations: monomials r^(2j) rho^(2p) of total degree < order
    equations = {(j, d - j): pos for pos, (d, j) in enumerate(
        (d, j) for d in range(order) for j in range(d + 1))}
    n_pde = len(equations)
    A = np.zeros((n_pde + order + 1, len(unknowns)))
    b = np.zeros(n_pde + order + 1)

    for (i, j), col in index.items():
        p = i - j
        for q, lam_q in enumerate(lam):
            row = equations.get((j, p + q))
            if row is not None:
                A[row, col] += lam_q
        if j > 0:
            row = equations.get((j - 1, p))
            if row is not None:
                A[row, col] -= 4.0 * j * (j - gp)
        if p > 0:
            row = equations.get((j, p - 1))
            if row is not None:
                A[row, col] += 4.0 * p * (p + gp)
        A[n_pde + i, col] = 1.0
    for i in range(order + 1):
        b[n_pde + i] = -lam[i] / (2.0 * (2 * i + 1))

    x = np.linalg.solve(A, b)
    C = np.zeros((order + 1, order + 1))
    for (i, j), col in index.items():
        C[i, j] = x[col]
    return KernelCoefficients(n=n, l=l, gamma_prime=gp, order=order, C=C)


def dense_mixed_parity_oracle(raw: RawSeries, n: int, l: int, order: int) -> Tuple[np.ndarray, float]:
    """
    Least-squares solve of the mixed-parity coefficient system

    Unknowns are C[i][j] of r^j rho^(i-j) for i <= order; raw holds the
    coefficients of (lambda + c) / epsilon in powers r^i. Terms with a
    negative power of r or rho must vanish, which is where odd reaction
    coefficients make the system inconsistent.

    Returns:
        (C, relative residual ||A x - b|| / ||b||)
    """
    gamma = n + 2 * l - 2
    lam = np.zeros(order + 1)
    stored = min(order + 1, len(raw.coeffs))
    lam[:stored] = raw.coeffs[:stored]
    unknowns = [(i, j) for i in range(order + 1) for j in range(i + 1)]
    equations = {}
    for d in range(-1, order - 1):
        for j in range(-1, d + 2):
            equations[(j, d - j)] = len(equations)
    n_pde = len(equations)
    A = np.zeros((n_pde + order + 1, len(unknowns)))
    b = np.zeros(n_pde + order + 1)

    for col, (i, j) in enumerate(unknowns):
        p = i - j
        for q, lam_q in enumerate(lam):
            row = equations.get((j, p + q))
            if row is not None:
                A[row, col] += lam_q
        if j > 0:
            row = equations.get((j - 2, p))
            if row is not None:
                A[row, col] -= j * (j - gamma)
        if p > 0:
            row = equations.get((j, p - 2))
            if row is not None:
                A[row, col] += p * (p + gamma)
        A[n_pde + i, col] = 1.0
    for i in range(order + 1):
        b[n_pde + i] = -lam[i] / (2.0 * (i + 1))

    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    C = np.zeros((order + 1, order + 1))
    for col, (i, j) in enumerate(unknowns):
        C[i, j] = x[col]
    b_norm = max(np.linalg.norm(b), np.finfo(float).tiny)
    return C, float(np.linalg.norm(A @ x - b) / b_norm)


def kernel_to_dict(k: KernelCoefficients) -> Dict[str, Any]:
    return {
        'n': k.n,
        'l': k.l,
        'gamma_prime': k.gamma_prime,
        'order': k.order,
        'C': [[float(value) for value in k.C[i, :i + 1]] for i in range(k.order + 1)],
    }


def kernel_from_dict(data: Dict[str, Any]) -> KernelCoefficients:
    order = int(data['order'])
    rows = data['C']
    if len(rows) != order + 1 or any(len(row) != i + 1 for i, row in enumerate(rows)):
        raise ValidationError("Kernel coefficient array is not triangular of the stated order")
    C = np.zeros((order + 1, order + 1))
    for i, row in enumerate(rows):
        C[i, :i + 1] = row
    return KernelCoefficients(n=int(data['n']), l=int(data['l']),
                              gamma_prime=float(data['gamma_prime']), order=order, C=C)


def load_kernel(path: Union[str, Path]) -> KernelCoefficients:
    """Read a kernel written by the exporter"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Kernel file not found: {path}")
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Kernel file {path} is not valid JSON: {e}")
    return kernel_from_dict(data)


class KernelSolver:
    """Solve and check kernels for a set of harmonic degrees"""

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize kernel solver

        Args:
            config: Configuration dictionary
        """
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.solver_config = config.get('solver', {})
        self.order = int(self.solver_config.get('order', DEFAULT_ORDER))
        self.max_order = int(self.solver_config.get('max_order', DEFAULT_MAX_ORDER))
        self.tolerance = float(self.solver_config.get('tolerance', RESIDUAL_TOL))
        self.threads = int(config.get('runtime', {}).get('threads', 1))
        self.progress = bool(config.get('runtime', {}).get('progress', True))

    def solve(self, reaction: EvenPowerSeries, n: int, l: int) -> KernelCoefficients:
        self.logger.debug(f"Solving kernel n={n}, l={l}, order={self.order}")
        kernel = solve_kernel(reaction, n, l, self.order, self.max_order)
        row_sum, recurrence = constraint_residuals(kernel, reaction)
        worst = max(float(row_sum.max()), float(recurrence.max()))
        if worst > SOLVER_TOL:
            self.logger.warning(f"Kernel l={l}: constraint residual {worst:.2e} above tolerance {SOLVER_TOL:.1e}")
        return kernel

    def solve_degrees(self, reaction: EvenPowerSeries, n: int,
                      degrees: Iterable[int]) -> Dict[int, KernelCoefficients]:
        """Solve every degree; degrees are independent and may run on a thread pool"""
        degrees = sorted(set(degrees))
        self.logger.info(f"Solving {len(degrees)} kernels (n={n}, order={self.order}, threads={self.threads})")
        with ThreadPoolExecutor(max_workers=max(1, self.threads)) as executor:
            futures = {l: executor.submit(self.solve, reaction, n, l) for l in degrees}
            kernels = {l: futures[l].result()
                       for l in tqdm(degrees, desc="Kernels", disable=not self.progress)}
        return kernels

    def check(self, kernel: KernelCoefficients, reaction: EvenPowerSeries) -> ResidualReport:
        report = pde_residual(kernel, reaction)
        status = "ok" if report.passed(self.tolerance) else "FAILED"
        self.logger.info(
            f"Kernel l={kernel.l}: matched residual {report.relative_matched_residual:.2e}, "
            f"boundary residual {report.max_boundary_residual:.2e}, "
            f"truncation residual {report.max_pde_residual:.2e} [{status}]"
        )
        return report
