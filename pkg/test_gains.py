#!/usr/bin/env python3
"""
Tests for control and observer gains
Quadrature weights, gain tables, Volterra matrices and the discrete inverse
"""

import sys
import numpy as np
from scipy.integrate import quad

from src.errors import DomainViolation, GridMismatch, ValidationError
from src.series import EvenPowerSeries, reaction_series
from src.kernel_solver import evaluate_G, evaluate_K, solve_kernel
from src.gains import (GainTable, control_gain, control_value, inverse_kernel, kernel_surface,
                       observer_gain, quadrature_weights, volterra_matrix, volterra_resolvent)
from src.radial_sim import ModeState, RadialGrid

BALL_REACTION = reaction_series([50.0, 50.0, 10.0], c=3.0, epsilon=1.0)


def test_quadrature_weights():
    """Test midpoint weights on the staggered grid and trapezoid weights elsewhere"""
    print("Testing quadrature weights...")

    grid = RadialGrid(50)
    weights = quadrature_weights(grid.nodes)
    assert np.allclose(weights, grid.h, rtol=0, atol=1e-15)

    weights = quadrature_weights([0.5, 1.0])
    np.testing.assert_allclose(weights, [0.5, 0.25])
    # exact for f(rho) = rho with f(0) = 0
    assert abs(weights @ np.array([0.5, 1.0]) - 0.5) < 1e-15

    for bad in ([], [0.0, 0.5], [0.5, 0.4], [0.5, 1.2]):
        try:
            quadrature_weights(bad)
            assert False, f"Node list {bad} accepted"
        except DomainViolation:
            pass

    print("✓ Quadrature weights correct")
    return True


def test_control_gain_samples_boundary_kernel():
    """Test that the control gain is K(1, rho) on the grid"""
    print("Testing control gain...")

    k = solve_kernel(BALL_REACTION, 3, 1, 15)
    grid = RadialGrid(40)
    table = control_gain(k, grid.nodes)
    assert table.kind == 'control' and table.n == 3 and table.l == 1 and table.order == 15
    np.testing.assert_allclose(table.values, evaluate_K(k, 1.0, grid.nodes), rtol=1e-14, atol=0)
    np.testing.assert_allclose(table.weighted(), table.weights * table.values)
    assert not table.values.flags.writeable

    print("✓ Control gain samples K(1, rho)")
    return True


def test_control_value_quadrature():
    """Test control_value against adaptive quadrature of the continuous integral"""
    print("Testing control value...")

    k = solve_kernel(EvenPowerSeries([2.0, 1.0]), 3, 0, 15)
    grid = RadialGrid(200)
    table = control_gain(k, grid.nodes)

    profile = lambda r: 1.0 - r ** 2
    state = ModeState(3, 0, 0, profile(grid.nodes), grid)
    exact, _ = quad(lambda rho: evaluate_K(k, 1.0, rho) * profile(rho), 0.0, 1.0, epsabs=1e-13)
    value = control_value(table, state)
    assert isinstance(value, complex)
    assert abs(value.real - exact) < 1e-4 * abs(exact), f"{value.real} vs {exact}"
    assert value.imag == 0.0

    other = ModeState(3, 0, 0, np.ones(100), RadialGrid(100))
    try:
        control_value(table, other)
        assert False, "Mismatched grids accepted"
    except GridMismatch:
        pass

    print("✓ Control value matches the integral")
    return True


def test_gains_depend_only_on_degree():
    """Test that every order m of a degree shares one gain"""
    print("Testing order independence...")

    k = solve_kernel(BALL_REACTION, 3, 2, 15)
    grid = RadialGrid(30)
    table = control_gain(k, grid.nodes)
    u = np.linspace(0.0, 1.0, 30)
    values = {m: control_value(table, ModeState(3, 2, m, u, grid)) for m in range(-2, 3)}
    assert len(set(values.values())) == 1

    print("✓ Gains shared across orders")
    return True


def test_observer_gain():
    """Test p(r) = epsilon G(1, r) r^l"""
    print("Testing observer gain...")

    k = solve_kernel(BALL_REACTION, 3, 3, 15)
    grid = RadialGrid(25)
    table = observer_gain(k, 0.7, grid.nodes)
    assert table.kind == 'observer' and table.epsilon == 0.7
    expected = 0.7 * np.asarray(evaluate_G(k, 1.0, grid.nodes)) * grid.nodes ** 3
    np.testing.assert_allclose(table.values, expected, rtol=1e-14)

    small = solve_kernel(EvenPowerSeries([1e-6]), 3, 2, 6)
    table = observer_gain(small, 1.0, grid.nodes)
    np.testing.assert_allclose(table.values, -0.5e-6 * grid.nodes ** 2, rtol=1e-5)

    print("✓ Observer gain correct")
    return True


def test_gain_table_validation():
    """Test GainTable construction checks"""
    print("Testing gain table validation...")

    try:
        GainTable(kind='feedforward', n=3, l=0, nodes=[0.5], weights=[1.0], values=[1.0])
        assert False, "Unknown kind accepted"
    except ValidationError:
        pass
    try:
        GainTable(kind='control', n=3, l=0, nodes=[0.25, 0.75], weights=[0.5], values=[1.0, 2.0])
        assert False, "Mismatched lengths accepted"
    except ValidationError:
        pass

    print("✓ Gain tables validated")
    return True


def test_volterra_matrix_approximates_integral():
    """Test (Q u)_a against integral_0^r_a K(r_a, rho) u(rho) d rho"""
    print("Testing Volterra matrix...")

    k = solve_kernel(EvenPowerSeries([4.0, 2.0]), 3, 1, 15)
    grid = RadialGrid(400)
    nodes = grid.nodes
    Q = volterra_matrix(k, nodes)
    assert np.all(np.triu(Q, 1) == 0)

    u = np.cos(nodes)
    approx = Q @ u
    for a in (50, 200, 399):
        exact, _ = quad(lambda rho: evaluate_K(k, nodes[a], rho) * np.cos(rho), 0.0, nodes[a], epsabs=1e-13)
        assert abs(approx[a] - exact) < 1e-2 * max(abs(exact), 1e-8), f"node {a}: {approx[a]} vs {exact}"

    try:
        volterra_matrix(k, [0.1, 0.2, 0.5])
        assert False, "Non-uniform grid accepted"
    except DomainViolation:
        pass

    print("✓ Volterra matrix approximates the integral")
    return True


def test_discrete_inverse():
    """Test that the resolvent inverts the forward transformation on the grid"""
    print("Testing discrete inverse...")

    k = solve_kernel(BALL_REACTION, 3, 0, 15)
    grid = RadialGrid(120)
    table = inverse_kernel(k, grid.nodes)

    Q = table.forward
    R = volterra_resolvent(Q)
    identity = np.eye(grid.m_points)
    np.testing.assert_allclose((identity + R) @ (identity - Q), identity, atol=1e-8)
    assert np.all(np.triu(R, 1) == 0)

    rng = np.random.default_rng(3)
    u = rng.standard_normal(grid.m_points)
    back = table.apply_inverse(table.apply_forward(u))
    assert np.max(np.abs(back - u)) < 1e-8 * np.max(np.abs(u))

    summary = table.summary()
    assert summary['points'] == 120 and summary['l'] == 0
    assert summary['max_forward'] > 0

    print("✓ Discrete inverse exact on the grid")
    return True


def test_kernel_surface():
    """Test K sampled on the triangle"""
    print("Testing kernel surface...")

    k = solve_kernel(BALL_REACTION, 3, 1, 15)
    surface = kernel_surface(k, samples=11)
    # triangle lattice without the r = 0 corner
    assert surface.shape == (11 * 12 // 2 - 1, 3)
    assert np.all(surface[:, 1] <= surface[:, 0]) and np.all(surface[:, 0] > 0)
    np.testing.assert_allclose(surface[:, 2], evaluate_K(k, surface[:, 0], surface[:, 1]))

    try:
        kernel_surface(k, samples=1)
        assert False, "Single-sample surface accepted"
    except ValidationError:
        pass

    print("✓ Kernel surface sampled")
    return True


def run_all_tests():
    """Run all tests"""
    print("=" * 70)
    print("Running Gain Tests")
    print("=" * 70)
    print()

    tests = [
        test_quadrature_weights,
        test_control_gain_samples_boundary_kernel,
        test_control_value_quadrature,
        test_gains_depend_only_on_degree,
        test_observer_gain,
        test_gain_table_validation,
        test_volterra_matrix_approximates_integral,
        test_discrete_inverse,
        test_kernel_surface,
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
