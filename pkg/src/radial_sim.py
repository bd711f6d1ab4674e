"""
Method-of-lines simulation of the radial mode equations

Each harmonic mode u_l^m(t, r) solves a 1-D reaction-diffusion equation on
the staggered grid r_k = (k + 1/2) h with a Dirichlet boundary datum at r = 1.
All modes of one degree share the same operator and are stepped together.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from tqdm import tqdm

from src.errors import GridMismatch, LinearSolveFailure, MissingKernel, ValidationError
from src.gains import GainTable, control_gain, observer_gain, volterra_matrix
from src.kernel_solver import KernelCoefficients
from src.mode_analysis import ModePlan
from src.series import EvenPowerSeries, evaluate

logger = logging.getLogger(__name__)

LOOPS = ('open', 'full-state', 'output-feedback', 'target')
SCHEMES = ('coupled', 'split')
FIT_WINDOW = 0.5
FIT_FLOOR = 1e-14


@dataclass(frozen=True)
class RadialGrid:
    """Staggered grid r_k = (k + 1/2) h on (0, 1), h = 1 / m_points"""

    m_points: int

    def __post_init__(self):
        if self.m_points < 3:
            raise ValidationError(f"Radial grid needs at least 3 points, got {self.m_points}")

    @classmethod
    def uniform(cls, m_points: int) -> 'RadialGrid':
        return cls(int(m_points))

    @property
    def h(self) -> float:
        return 1.0 / self.m_points

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.m_points) + 0.5) * self.h


@dataclass
class ModeState:
    """Radial profile of one harmonic mode"""

    n: int
    l: int
    m: int
    values: np.ndarray
    grid: RadialGrid
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.m_points,):
            raise GridMismatch(
                f"Mode ({self.l},{self.m}) has {self.values.size} values for a {self.grid.m_points}-point grid"
            )


@dataclass
class SimConfig:
    """
    Parameters of a per-mode simulation

    reaction holds lambda(r) on the unit ball; c and epsilon are kept apart
    since the plant and the target system use them differently.
    """

    epsilon: float
    c: float
    reaction: EvenPowerSeries
    grid: RadialGrid
    dt: float = 1e-4
    t_end: float = 2.0
    n: int = 3
    scheme: str = 'coupled'
    loop: str = 'full-state'
    record_every: int = 100

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError(f"Diffusion coefficient must be > 0, got {self.epsilon}")
        if self.c < 0:
            raise ValidationError(f"Target damping c must be >= 0, got {self.c}")
        if self.dt <= 0:
            raise ValidationError(f"Time step must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ValidationError(f"Final time must be >= 0, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"Unknown scheme '{self.scheme}', expected one of {SCHEMES}")
        if self.loop not in LOOPS:
            raise ValidationError(f"Unknown loop '{self.loop}', expected one of {LOOPS}")
        if self.record_every < 1:
            raise ValidationError(f"record_every must be >= 1, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimReport:
    """Recorded history of one mode"""

    n: int
    l: int
    m: int
    loop: str
    times: np.ndarray
    l2_norms: np.ndarray
    control_signal: np.ndarray
    fitted_decay_rate: float
    observer_error_norms: Optional[np.ndarray] = None
    observer_decay_rate: Optional[float] = None
    final_state: Optional[ModeState] = None
    final_observer: Optional[ModeState] = None
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    error_snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    probe_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    probes: Optional[np.ndarray] = None
    error_probes: Optional[np.ndarray] = None
    # sum_k u_k r_k^(n-1) h at each recorded time
    moments: Optional[np.ndarray] = None
    error_moments: Optional[np.ndarray] = None


def l2_norm(u: ModeState, grid: RadialGrid) -> float:
    """sqrt(sum |u_k|^2 r_k^(n-1) h), the weighted L2 norm by the midpoint rule"""
    if u.values.shape != (grid.m_points,):
        raise GridMismatch("State does not live on the given grid")
    return float(_column_norms(u.values[:, None], grid, u.n)[0])


def _column_norms(values: np.ndarray, grid: RadialGrid, n: int) -> np.ndarray:
    weights = grid.nodes ** (n - 1) * grid.h
    return np.sqrt(weights @ (np.abs(values) ** 2))


def measured_flux(values: np.ndarray, boundary_value, h: float):
    """d/dr u at r = 1 from the one-sided stencil (8U - 9u_{M-1} + u_{M-2}) / (3h)"""
    return (8.0 * boundary_value - 9.0 * values[-1] + values[-2]) / (3.0 * h)


class RadialOperator:
    """Discrete spatial operator of one degree, its boundary column and flux row"""

    def __init__(self, cfg: SimConfig, n: int, l: int, target: bool = False):
        """
        Assemble eps r^(1-n) d/dr(r^(n-1) d/dr) - eps l(l+n-2)/r^2 + lambda(r)

        Args:
            cfg: simulation configuration
            n: ball dimension
            l: harmonic degree
            target: replace lambda(r) by -c (target system)
        """
        self.n = n
        self.l = l
        self.dt = cfg.dt
        grid = cfg.grid
        M, h, eps = grid.m_points, grid.h, cfg.epsilon
        r = grid.nodes
        self.h = h

        upper_face = ((np.arange(M) + 1) * h) ** (n - 1)
        lower_face = (np.arange(M) * h) ** (n - 1)
        volume = r ** (n - 1) * h ** 2
        if target:
            potential = np.full(M, -cfg.c)
        else:
            potential = np.asarray(evaluate(cfg.reaction, r))
        potential = potential - eps * l * (l + n - 2) / r ** 2

        diag = -eps * (upper_face + lower_face) / volume + potential
        # Dirichlet ghost u_M = 2U - u_{M-1}
        diag[-1] = -eps * (2.0 * upper_face[-1] + lower_face[-1]) / volume[-1] + potential[-1]
        upper = eps * upper_face[:-1] / volume[:-1]
        lower = eps * lower_face[1:] / volume[1:]
        self.A = sp.diags([lower, diag, upper], [-1, 0, 1], shape=(M, M), format='csr')

        self.b = np.zeros(M)
        self.b[-1] = 2.0 * eps * upper_face[-1] / volume[-1]
        # flux = s . u + (8 / (3h)) U
        self.flux_row = np.zeros(M)
        self.flux_row[-1] = -3.0 / h
        self.flux_row[-2] = 1.0 / (3.0 * h)

        self._factor = None
        self._rhs = None

    def trapezoid(self):
        """Cached (splu of I - dt/2 A, I + dt/2 A)"""
        if self._factor is None:
            self._factor, self._rhs = _trapezoid_pair(self.A, self.dt)
        return self._factor, self._rhs


def _trapezoid_pair(S: sp.spmatrix, dt: float):
    identity = sp.identity(S.shape[0], format='csr')
    try:
        factor = splu((identity - 0.5 * dt * S).tocsc())
    except RuntimeError as e:
        raise LinearSolveFailure(f"Trapezoidal system is singular: {e}")
    return factor, (identity + 0.5 * dt * S).tocsr()


def _solve(factor, rhs: np.ndarray) -> np.ndarray:
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs):
        real = factor.solve(np.ascontiguousarray(rhs.real))
        imag = factor.solve(np.ascontiguousarray(rhs.imag))
        out = real + 1j * imag
    else:
        out = factor.solve(np.ascontiguousarray(rhs))
    if not np.all(np.isfinite(out)):
        raise LinearSolveFailure("Time step produced non-finite values")
    return out


def _plant_update(op: RadialOperator, values: np.ndarray, boundary_value) -> np.ndarray:
    factor, rhs = op.trapezoid()
    b = op.b if values.ndim == 1 else op.b[:, None]
    return _solve(factor, rhs @ values + op.dt * b * boundary_value)


def _observer_update(op: RadialOperator, values: np.ndarray, boundary_value, injection) -> np.ndarray:
    factor, rhs = op.trapezoid()
    b = op.b if values.ndim == 1 else op.b[:, None]
    return _solve(factor, rhs @ values + op.dt * (b * boundary_value + injection))


def step_plant(u: ModeState, cfg: SimConfig, boundary_value: complex,
               operator: Optional[RadialOperator] = None) -> ModeState:
    """Advance one plant mode by dt with the boundary datum held over the step"""
    op = operator or RadialOperator(cfg, u.n, u.l)
    values = _plant_update(op, u.values, boundary_value)
    return ModeState(u.n, u.l, u.m, values, u.grid, u.time + cfg.dt)


def step_observer(uhat: ModeState, cfg: SimConfig, gain: GainTable, flux: complex,
                  boundary_value: complex, operator: Optional[RadialOperator] = None) -> ModeState:
    """
    Advance the observer copy by dt

    The injection p(r)(y - y_hat) uses the plant flux y and the estimate's
    flux y_hat from the same one-sided stencil, both taken at the step start.
    """
    if gain.nodes.shape != uhat.grid.nodes.shape or not np.allclose(gain.nodes, uhat.grid.nodes, rtol=0.0, atol=1e-14):
        raise GridMismatch("Observer gain and observer state live on different grids")
    op = operator or RadialOperator(cfg, uhat.n, uhat.l)
    injection = gain.values * (flux - measured_flux(uhat.values, boundary_value, op.h))
    values = _observer_update(op, uhat.values, boundary_value, injection)
    return ModeState(uhat.n, uhat.l, uhat.m, values, uhat.grid, uhat.time + cfg.dt)


def transform_state(u: ModeState, k: KernelCoefficients) -> ModeState:
    """w = u - integral_0^r K(r, rho) u(rho) d rho on the grid"""
    if k.l != u.l or k.n != u.n:
        raise ValidationError(f"Kernel (n={k.n}, l={k.l}) does not match mode (n={u.n}, l={u.l})")
    Q = volterra_matrix(k, u.grid.nodes)
    return ModeState(u.n, u.l, u.m, u.values - Q @ u.values, u.grid, u.time)


def fit_decay_rate(times: Sequence[float], norms: Sequence[float]) -> float:
    """
    Slope of log ||u||^2 over the final half of the samples

    Squared norms below 1e-14 are dropped first, so fast modes are fitted
    over the last half of what remains; nan when fewer than two remain.
    """
    times = np.asarray(times, dtype=float)
    squared = np.asarray(norms, dtype=float) ** 2
    keep = squared > FIT_FLOOR
    t, y = times[keep], squared[keep]
    if t.size < 2:
        return float('nan')
    start = min(int(t.size * (1.0 - FIT_WINDOW)), t.size - 2)
    slope, _ = np.polyfit(t[start:], np.log(y[start:]), 1)
    return float(slope)


def _interpolate_columns(nodes: np.ndarray, values: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Linear interpolation of every column at the given radii, clamped to the end nodes"""
    out = np.empty((radii.size, values.shape[1]), dtype=complex)
    for col in range(values.shape[1]):
        out[:, col] = (np.interp(radii, nodes, values[:, col].real)
                       + 1j * np.interp(radii, nodes, values[:, col].imag))
    return out


class ModeSimulator:
    """Run every (l, m) mode of a plan under one loop configuration"""

    def __init__(self, cfg: SimConfig, threads: int = 1, progress: bool = True,
                 snapshot_times: Sequence[float] = (), probe_radii: Sequence[float] = ()):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.progress = progress
        self.snapshot_times = sorted(float(t) for t in snapshot_times if 0.0 <= t <= cfg.t_end + 0.5 * cfg.dt)
        self.probe_radii = np.asarray(probe_radii, dtype=float)
        self.logger = logging.getLogger(__name__)

    def simulate(self, kernels: Dict[int, KernelCoefficients], plan: ModePlan,
                 initial: Dict[Tuple[int, int], ModeState],
                 observer_initial: Optional[Dict[Tuple[int, int], ModeState]] = None
                 ) -> Dict[Tuple[int, int], SimReport]:
        """
        Simulate all modes

        Args:
            kernels: solved kernels by degree
            plan: mode plan deciding which degrees are controlled
            initial: plant initial states by (l, m)
            observer_initial: observer initial states by (l, m); zero when omitted

        Returns:
            SimReport by (l, m), in sorted order
        """
        cfg = self.cfg
        by_degree: Dict[int, List[Tuple[int, int]]] = {}
        for key in sorted(initial):
            by_degree.setdefault(key[0], []).append(key)

        if cfg.loop != 'open':
            for l in sorted(by_degree):
                if plan.is_controlled(l) and l not in kernels:
                    raise MissingKernel(l)

        self.logger.info(
            f"Simulating {len(initial)} modes over {len(by_degree)} degrees "
            f"(loop={cfg.loop}, scheme={cfg.scheme}, grid={cfg.grid.m_points}, dt={cfg.dt}, t_end={cfg.t_end})"
        )

        reports: Dict[Tuple[int, int], SimReport] = {}
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            futures = {
                executor.submit(self._run_degree, l, keys, initial, observer_initial,
                                kernels.get(l), plan.is_controlled(l)): l
                for l, keys in by_degree.items()
            }
            for future in tqdm(as_completed(futures), total=len(futures), desc=f"Simulating ({cfg.loop})",
                               disable=not self.progress):
                reports.update(future.result())
        return {key: reports[key] for key in sorted(reports)}

    def _system(self, op: RadialOperator, g: np.ndarray, p: np.ndarray) -> sp.spmatrix:
        """Closed-loop system matrix for the coupled scheme"""
        loop = self.cfg.loop
        feedback = sp.csr_matrix(np.outer(op.b, g))
        if loop == 'full-state':
            return (op.A + feedback).tocsr()
        if loop == 'output-feedback':
            injection = sp.csr_matrix(np.outer(p, op.flux_row))
            return sp.bmat([[op.A, feedback], [injection, op.A + feedback - injection]], format='csr')
        return op.A

    def _run_degree(self, l: int, keys: List[Tuple[int, int]], initial, observer_initial,
                    kernel: Optional[KernelCoefficients], controlled: bool) -> Dict[Tuple[int, int], SimReport]:
        cfg = self.cfg
        n, grid = cfg.n, cfg.grid
        nodes = grid.nodes
        M = grid.m_points
        loop = cfg.loop
        op = RadialOperator(cfg, n, l, target=(loop == 'target'))

        u = np.column_stack([initial[key].values for key in keys])
        if loop == 'target' and kernel is not None:
            u = u - volterra_matrix(kernel, nodes) @ u

        g = np.zeros(M)
        p = np.zeros(M)
        if controlled and kernel is not None and loop in ('full-state', 'output-feedback'):
            g = control_gain(kernel, nodes).weighted()
            if loop == 'output-feedback':
                p = observer_gain(kernel, cfg.epsilon, nodes).values

        observing = loop == 'output-feedback'
        if observing:
            if observer_initial is not None:
                uhat = np.column_stack([observer_initial[key].values for key in keys])
            else:
                uhat = np.zeros_like(u)
        else:
            uhat = None

        n_steps = cfg.n_steps
        snapshot_steps = {int(round(t / cfg.dt)): t for t in self.snapshot_times}
        record_steps = set(range(0, n_steps + 1, cfg.record_every)) | {n_steps}

        times, norms, err_norms, controls, probes, err_probes = [], [], [], [], [], []
        moments, err_moments = [], []
        moment_weights = nodes ** (n - 1) * grid.h
        snapshots: Dict[float, np.ndarray] = {}
        err_snapshots: Dict[float, np.ndarray] = {}

        def boundary(state_u, state_uhat):
            if loop == 'full-state':
                return g @ state_u
            if loop == 'output-feedback':
                return g @ state_uhat
            return np.zeros(state_u.shape[1], dtype=complex)

        def record(step, state_u, state_uhat):
            times.append(step * cfg.dt)
            norms.append(_column_norms(state_u, grid, n))
            moments.append(moment_weights @ state_u)
            controls.append(np.asarray(boundary(state_u, state_uhat), dtype=complex))
            if self.probe_radii.size:
                probes.append(_interpolate_columns(nodes, state_u, self.probe_radii))
            if observing:
                error = state_u - state_uhat
                err_norms.append(_column_norms(error, grid, n))
                err_moments.append(moment_weights @ error)
                if self.probe_radii.size:
                    err_probes.append(_interpolate_columns(nodes, error, self.probe_radii))

        if cfg.scheme == 'coupled' and loop in ('full-state', 'output-feedback'):
            factor, rhs = _trapezoid_pair(self._system(op, g, p), cfg.dt)
        else:
            factor, rhs = None, None

        u = u.astype(complex)
        if observing:
            uhat = uhat.astype(complex)
        for step in range(n_steps + 1):
            if step in record_steps:
                record(step, u, uhat)
            if step in snapshot_steps:
                snapshots[snapshot_steps[step]] = u.copy()
                if observing:
                    err_snapshots[snapshot_steps[step]] = u - uhat
            if step == n_steps:
                break
            if factor is not None:
                x = np.vstack([u, uhat]) if observing else u
                x = _solve(factor, rhs @ x)
                if observing:
                    u, uhat = x[:M], x[M:]
                else:
                    u = x
            else:
                U = boundary(u, uhat)
                if observing:
                    innovation = op.flux_row @ (u - uhat)
                    uhat = _observer_update(op, uhat, U, p[:, None] * innovation[None, :])
                u = _plant_update(op, u, U)

        times = np.asarray(times)
        norms = np.vstack(norms)
        controls = np.vstack(controls)
        if not np.all(np.isfinite(norms)):
            self.logger.warning(f"Degree l={l}: non-finite norm encountered")

        reports = {}
        for col, key in enumerate(keys):
            m = key[1]
            report = SimReport(
                n=n, l=l, m=m, loop=loop,
                times=times,
                l2_norms=norms[:, col],
                control_signal=controls[:, col],
                fitted_decay_rate=fit_decay_rate(times, norms[:, col]),
                final_state=ModeState(n, l, m, u[:, col], grid, n_steps * cfg.dt),
                snapshots={t: values[:, col] for t, values in snapshots.items()},
                probe_radii=self.probe_radii,
                probes=np.array([frame[:, col] for frame in probes]) if probes else None,
                moments=np.array([frame[col] for frame in moments]),
            )
            if observing:
                error_norms = np.vstack(err_norms)[:, col]
                report.observer_error_norms = error_norms
                report.observer_decay_rate = fit_decay_rate(times, error_norms)
                report.error_moments = np.array([frame[col] for frame in err_moments])
                report.final_observer = ModeState(n, l, m, uhat[:, col], grid, n_steps * cfg.dt)
                report.error_snapshots = {t: values[:, col] for t, values in err_snapshots.items()}
                report.error_probes = np.array([frame[:, col] for frame in err_probes]) if err_probes else None
            reports[key] = report
        self.logger.debug(f"Degree l={l}: {len(keys)} modes, final norms {norms[-1]}")
        return reports


def simulate(cfg: SimConfig, kernels: Dict[int, KernelCoefficients], plan: ModePlan,
             initial: Dict[Tuple[int, int], ModeState],
             observer_initial: Optional[Dict[Tuple[int, int], ModeState]] = None,
             threads: int = 1, progress: bool = False) -> Dict[Tuple[int, int], SimReport]:
    """Convenience wrapper around ModeSimulator without snapshots or probes"""
    return ModeSimulator(cfg, threads=threads, progress=progress).simulate(kernels, plan, initial, observer_initial)
