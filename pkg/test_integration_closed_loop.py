#!/usr/bin/env python3
"""
Integration tests for the closed loop on the 3-ball
Seeded random initial field, all modes up to a band limit, open loop,
full-state and output-feedback loops, transformation consistency and
grid convergence. Runs take a few minutes.
"""

import sys
import time
import numpy as np

from src.config import load_config
from src.harmonics import AngularGrid
from src.initial_state import observer_noise_modes, random_initial_modes
from src.kernel_solver import KernelSolver
from src.mode_analysis import build_mode_plan
from src.radial_sim import ModeSimulator, ModeState, RadialGrid, SimConfig, fit_decay_rate, l2_norm, transform_state

BAND_LIMIT = 4
SEED = 20240607

CONFIG = load_config()
PLAN = build_mode_plan(CONFIG.lambda_series, CONFIG.problem['c'], CONFIG.epsilon_unit, 3)
KERNELS = KernelSolver({'solver': CONFIG.solver, 'runtime': {'threads': 4, 'progress': False}}).solve_degrees(
    CONFIG.reaction, 3, PLAN.controlled_degrees)


def _sim_config(grid: RadialGrid, loop: str, t_end: float, dt: float = 1e-4) -> SimConfig:
    return SimConfig(epsilon=CONFIG.epsilon_unit, c=CONFIG.problem['c'], reaction=CONFIG.lambda_series,
                     grid=grid, dt=dt, t_end=t_end, n=3, loop=loop, record_every=100)


def _initial_states(grid: RadialGrid, with_noise: bool = False):
    angular = AngularGrid.for_band_limit(3, BAND_LIMIT)
    rng = np.random.default_rng(SEED)
    modes, _ = random_initial_modes(3, BAND_LIMIT, grid, angular, rng)
    initial = {key: ModeState(3, key[0], key[1], modes.coefficients[key], grid) for key in modes.keys()}
    if not with_noise:
        return initial, None
    noise = observer_noise_modes(3, BAND_LIMIT, grid, angular, rng, sigma2=0.5)
    observer = {key: ModeState(3, key[0], key[1], modes.coefficients[key] - noise.coefficients[key], grid)
                for key in modes.keys()}
    return initial, observer


def _field_norms(reports, attr: str = 'l2_norms') -> np.ndarray:
    """Full-field L2 norm over time by Parseval"""
    return np.sqrt(sum(getattr(r, attr) ** 2 for r in reports.values()))


def _run(grid_points: int, loop: str, t_end: float, smooth_observer: bool = False):
    grid = RadialGrid(grid_points)
    initial, observer = _initial_states(grid, with_noise=(loop == 'output-feedback'))
    if observer is not None and smooth_observer:
        # white noise differs between grids, a scaled copy does not
        observer = {key: ModeState(3, key[0], key[1], 0.5 * state.values, grid) for key, state in initial.items()}
    simulator = ModeSimulator(_sim_config(grid, loop, t_end), threads=4, progress=False)
    return simulator.simulate(KERNELS, PLAN, initial, observer)


def test_open_loop_grows():
    """Test that the uncontrolled field grows over [0, 0.2]"""
    print("Testing open loop...")

    norms = _field_norms(_run(200, 'open', 0.2))
    assert norms[-1] > norms[0], f"Open-loop norm {norms[0]:.4g} -> {norms[-1]:.4g}"

    print(f"✓ Open loop grows ({norms[0]:.4g} -> {norms[-1]:.4g})")
    return True


def test_full_state_closed_loop():
    """Test ||u(2)|| < 1e-2 ||u(0)|| under full-state feedback"""
    print("Testing full-state closed loop...")

    start = time.time()
    norms = _field_norms(_run(200, 'full-state', 2.0))
    assert norms[-1] < 1e-2 * norms[0], f"Full-state norm {norms[0]:.4g} -> {norms[-1]:.4g}"

    print(f"✓ Full-state loop decays ({norms[0]:.4g} -> {norms[-1]:.4g}, {time.time() - start:.1f}s)")
    return True


def test_output_feedback_closed_loop():
    """Test observer error and plant decay under output feedback with noisy observer start"""
    print("Testing output-feedback closed loop...")

    reports = _run(200, 'output-feedback', 2.0)
    norms = _field_norms(reports)
    errors = _field_norms(reports, 'observer_error_norms')
    assert errors[0] > 0
    assert errors[-1] < 1e-3 * errors[0], f"Observer error {errors[0]:.4g} -> {errors[-1]:.4g}"
    assert norms[-1] < 1e-1 * norms[0], f"Plant norm {norms[0]:.4g} -> {norms[-1]:.4g}"

    print(f"✓ Output feedback converges (error {errors[0]:.4g} -> {errors[-1]:.4g})")
    return True


def test_transformation_consistency():
    """Test that the transformed closed loop decays like the target system for l = 0"""
    print("Testing transformation consistency...")

    grid = RadialGrid(200)
    t_end = 1.0
    times = np.round(np.arange(0.0, t_end + 1e-9, 0.05), 10)
    u0 = 1.0 - 0.5 * grid.nodes ** 2
    initial = {(0, 0): ModeState(3, 0, 0, u0, grid)}

    closed = ModeSimulator(_sim_config(grid, 'full-state', t_end), progress=False,
                           snapshot_times=times).simulate(KERNELS, PLAN, initial)[(0, 0)]
    target = ModeSimulator(_sim_config(grid, 'target', t_end), progress=False).simulate(
        KERNELS, PLAN, initial)[(0, 0)]

    snapshot_times = sorted(closed.snapshots)
    w_norms = [l2_norm(transform_state(ModeState(3, 0, 0, closed.snapshots[t], grid), KERNELS[0]), grid)
               for t in snapshot_times]
    transformed_rate = fit_decay_rate(snapshot_times, w_norms)
    target_rate = target.fitted_decay_rate
    assert target_rate <= -0.8 * PLAN.predicted_D2
    assert abs(transformed_rate - target_rate) <= 0.25 * abs(target_rate), \
        f"Transformed rate {transformed_rate:.4g} vs target rate {target_rate:.4g}"

    print(f"✓ Rates agree ({transformed_rate:.4g} vs {target_rate:.4g})")
    return True


def test_target_decay_rate_at_full_resolution():
    """Test the target system rate for l in {0, 3} on the 200-point grid"""
    print("Testing target decay at full resolution...")

    grid = RadialGrid(200)
    initial = {(l, 0): ModeState(3, l, 0, grid.nodes ** l * (1.0 - 0.5 * grid.nodes ** 2), grid) for l in (0, 3)}
    start = time.time()
    reports = ModeSimulator(_sim_config(grid, 'target', 1.0), progress=False).simulate(KERNELS, PLAN, initial)
    elapsed = time.time() - start
    for key, report in reports.items():
        assert report.fitted_decay_rate <= -0.8 * PLAN.predicted_D2, f"{key}: {report.fitted_decay_rate}"
    assert elapsed < 60.0

    print(f"✓ Target decays ({elapsed:.1f}s)")
    return True


def test_grid_convergence():
    """Test that doubling the radial resolution changes final norms by less than 5%"""
    print("Testing grid convergence...")

    for loop in ('full-state', 'output-feedback'):
        coarse = _field_norms(_run(100, loop, 2.0, smooth_observer=True))[-1]
        fine = _field_norms(_run(200, loop, 2.0, smooth_observer=True))[-1]
        change = abs(fine - coarse) / fine
        assert change < 0.05, f"{loop}: final norm {coarse:.4g} (100 points) vs {fine:.4g} (200 points)"
        print(f"  {loop}: {coarse:.4g} vs {fine:.4g}")

    print("✓ Final norms grid-independent")
    return True


def run_all_tests():
    """Run all tests"""
    print("=" * 70)
    print("Running Closed-Loop Integration Tests")
    print("=" * 70)
    print()

    tests = [
        test_open_loop_grows,
        test_full_state_closed_loop,
        test_output_feedback_closed_loop,
        test_transformation_consistency,
        test_target_decay_rate_at_full_resolution,
        test_grid_convergence,
    ]

    results = []
    for test in tests:
        try:
            result = test()
            results.append((test.__name__, result))
            print()
        except Exception as e:
            print(f"✗ {test.__name__} failed: {str(e)}")
            import traceback
            traceback.print_exc()
            results.append((test.__name__, False))
            print()

    print("=" * 70)
    print("Test Summary")
    print("=" * 70)

    passed = sum(1 for _, r in results if r)
    total = len(results)

    for name, result in results:
        status = "✓ PASS" if result else "✗ FAIL"
        print(f"{name:.<50} {status}")

    print("=" * 70)
    print(f"\nPassed: {passed}/{total}")

    return passed == total


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
