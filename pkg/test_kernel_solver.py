#!/usr/bin/env python3
"""
Tests for the kernel power-series solver
Closing coefficient, recurrence against an independent dense solve,
PDE residuals, evenness rejection and kernel serialization
"""

import sys
import json
import time
import tempfile
import numpy as np
from pathlib import Path
from scipy.special import comb

from src.errors import DomainViolation, EvennessViolation, OrderOverflow
from src.series import EvenPowerSeries, RawSeries, boundary_series, evaluate, reaction_series, validate_even
from src.kernel_solver import (KernelSolver, a_coeff, constraint_residuals, dense_kernel_oracle,
                               dense_mixed_parity_oracle, evaluate_G, evaluate_G_grid, evaluate_K,
                               kappa, kappa_product_form, kernel_from_dict, kernel_to_dict, load_kernel,
                               pde_residual, solve_kernel)

BALL_REACTION = reaction_series([50.0, 50.0, 10.0], c=3.0, epsilon=1.0)


def test_kappa_examples():
    """Test closed-form kappa on hand-evaluated cases"""
    print("Testing kappa examples...")

    for gp in (0.0, 0.5, 3.0, 7.25):
        assert kappa(0, gp) == 1.0
        assert abs(kappa(1, gp) - 2.0 / (1.0 + gp)) < 1e-14
    assert abs(kappa(1, 1.5) - 0.8) < 1e-14
    for i in range(8):
        assert abs(kappa(i, 0.0) - comb(2 * i, i, exact=True)) < 1e-9 * comb(2 * i, i, exact=True)
    assert abs(kappa(2, 0.0) - 6.0) < 1e-12

    print("✓ kappa matches hand values")
    return True


def test_kappa_identity():
    """Test the sum-of-products form against the Gamma closed form"""
    print("Testing kappa identity for i <= 40...")

    start = time.time()
    for i in range(41):
        for gp in np.arange(0.0, 10.5, 0.5):
            closed = kappa(i, gp)
            direct = kappa_product_form(i, gp)
            assert closed > 0 and direct > 0, f"kappa({i}, {gp}) not positive"
            assert abs(direct - closed) <= 1e-9 * closed, f"kappa({i}, {gp}): {direct} vs {closed}"
    elapsed = time.time() - start
    assert elapsed < 1.0, f"kappa identity check took {elapsed:.2f}s"

    for i in range(0, 61, 5):
        for gp in (0.0, 2.5, 13.0, 20.0):
            assert kappa(i, gp) > 0

    print(f"✓ kappa identity holds ({elapsed:.3f}s)")
    return True


def test_a_coeff():
    """Test the recurrence coefficient a_ij"""
    print("Testing a_ij...")

    for gp in (0.0, 0.5, 2.0):
        assert abs(a_coeff(1, 0, gp) - (1 - gp) / (1 + gp)) < 1e-15
    assert a_coeff(5, 2, 0.0) == 9.0 / 9.0
    assert a_coeff(6, 1, 0.0) == 4.0 / 25.0
    assert a_coeff(6, 2, 3.0) == 0.0

    print("✓ a_ij correct")
    return True


def test_zero_reaction_gives_zero_kernel():
    """Test that a zero reaction gives an identically zero kernel and residual"""
    print("Testing zero reaction...")

    zero = EvenPowerSeries([0.0])
    k = solve_kernel(zero, 3, 2, 10)
    assert np.all(k.C == 0)
    assert evaluate_G(k, 0.7, 0.3) == 0.0
    report = pde_residual(k, zero)
    assert report.max_pde_residual == 0.0
    assert report.max_boundary_residual == 0.0
    assert all(v == 0.0 for v in report.per_degree_residuals)

    print("✓ Zero reaction handled")
    return True


def test_constant_reaction_first_rows():
    """Test rows 0 and 1 for a constant reaction"""
    print("Testing constant reaction rows...")

    lam = 2.5
    for n, l in ((2, 0), (3, 0), (3, 1), (4, 3), (5, 7)):
        k = solve_kernel(EvenPowerSeries([lam]), n, l, 6)
        assert abs(k.C[0, 0] + lam / 2) < 1e-15
        assert abs(k.C[1, 1] + lam ** 2 / 16) < 1e-14, f"C11 = {k.C[1, 1]} for n={n}, l={l}"
        assert abs(k.C[1, 0] - lam ** 2 / 16) < 1e-14, f"C10 = {k.C[1, 0]} for n={n}, l={l}"
        for i in range(1, 7):
            assert abs(k.C[i, :i + 1].sum()) < 1e-13

    print("✓ Constant reaction rows match")
    return True


def test_kernel_constraints_ball_reaction():
    """Test row sums and the recurrence for l = 0..10 at N = 15"""
    print("Testing kernel constraints...")

    for l in range(11):
        k = solve_kernel(BALL_REACTION, 3, l, 15)
        assert k.gamma_prime == 0.5 + l
        row_sum, recurrence = constraint_residuals(k, BALL_REACTION)
        assert row_sum.max() < 1e-12, f"l={l}: row-sum residual {row_sum.max():.2e}"
        assert recurrence.max() < 1e-12, f"l={l}: recurrence residual {recurrence.max():.2e}"
        for i in range(16):
            target = -BALL_REACTION.coefficient(i) / (2 * (2 * i + 1))
            assert abs(k.C[i, :i + 1].sum() - target) <= 1e-12 * max(1.0, np.abs(k.C[i]).max())

    print("✓ Constraints satisfied for l = 0..10")
    return True


def test_recurrence_matches_dense_oracle():
    """Test the recurrence against the dense coefficient-matching solve"""
    print("Testing recurrence against the dense oracle...")

    rng = np.random.default_rng(2024)
    start = time.time()
    worst = 0.0
    for _ in range(20):
        reaction = EvenPowerSeries(rng.uniform(-5, 5, size=rng.integers(1, 5)))
        for n in (2, 3):
            for l in (0, 1, 2, 5):
                k = solve_kernel(reaction, n, l, 8)
                oracle = dense_kernel_oracle(reaction, n, l, 8)
                scale = max(np.abs(k.C).max(), 1e-300)
                err = np.abs(k.C - oracle.C).max() / scale
                worst = max(worst, err)
                assert err < 1e-10, f"n={n}, l={l}: relative difference {err:.2e}"
    elapsed = time.time() - start
    assert elapsed < 10.0, f"Dense oracle comparison took {elapsed:.1f}s"

    print(f"✓ Recurrence matches dense solve (worst {worst:.1e}, {elapsed:.2f}s)")
    return True


def test_pde_residual_matched_degrees():
    """Test that matched degrees cancel and the boundary condition holds"""
    print("Testing PDE residual...")

    for l in range(6):
        k = solve_kernel(BALL_REACTION, 3, l, 15)
        report = pde_residual(k, BALL_REACTION)
        assert report.relative_matched_residual < 1e-10, f"l={l}: {report.relative_matched_residual:.2e}"
        assert report.max_boundary_residual < 1e-8, f"l={l}: boundary {report.max_boundary_residual:.2e}"
        assert all(v >= 0 for v in report.per_degree_residuals)
        assert report.sample_grid

    print("✓ Matched degrees cancel, boundary condition holds")
    return True


def test_pde_residual_truncation_decay():
    """Test that the interior residual shrinks with the truncation order"""
    print("Testing truncation decay...")

    low = pde_residual(solve_kernel(BALL_REACTION, 3, 0, 8), BALL_REACTION).max_pde_residual
    high = pde_residual(solve_kernel(BALL_REACTION, 3, 0, 15), BALL_REACTION).max_pde_residual
    assert high < 0.1 * low, f"N=15 residual {high:.2e} not below a tenth of N=8 residual {low:.2e}"

    print(f"✓ Residual decays ({low:.2e} -> {high:.2e})")
    return True


def test_evaluate_G_and_K():
    """Test kernel evaluation on the triangle"""
    print("Testing kernel evaluation...")

    k = solve_kernel(BALL_REACTION, 3, 2, 15)
    boundary = boundary_series(BALL_REACTION)
    for r in (0.0, 0.25, 0.6, 1.0):
        assert abs(evaluate_G(k, r, r) - evaluate(boundary, r)) < 1e-8
        assert abs(evaluate_K(k, max(r, 0.1), max(r, 0.1)) - evaluate_G(k, max(r, 0.1), max(r, 0.1)) * max(r, 0.1)) < 1e-12

    r = 0.8
    diagonal = sum(k.C[i, i] * r ** (2 * i) for i in range(16))
    assert abs(evaluate_G(k, r, 0.0) - diagonal) < 1e-9 * max(1.0, abs(diagonal))
    assert evaluate_K(k, r, 0.0) == 0.0

    r_nodes = np.linspace(0.1, 1.0, 7)
    grid = evaluate_G_grid(k, r_nodes, r_nodes)
    for a in range(7):
        for b in range(a + 1):
            assert abs(grid[a, b] - evaluate_G(k, r_nodes[a], r_nodes[b])) < 1e-9 * max(1.0, abs(grid[a, b]))
    assert np.all(np.triu(grid, 1) == 0)

    for bad in ((0.5, 0.6), (1.2, 0.5), (0.5, -0.1)):
        try:
            evaluate_G(k, *bad)
            assert False, f"Point {bad} accepted"
        except DomainViolation:
            pass
    try:
        evaluate_K(k, 0.0, 0.0)
        assert False, "r = 0 accepted"
    except DomainViolation:
        pass

    print("✓ Kernel evaluation correct")
    return True


def test_constant_reaction_K_leading_term():
    """Test K(r, rho) ~ rho^2 / r * (-lambda/2) for a small constant reaction at n=3, l=0"""
    print("Testing leading-order K...")

    lam = 1e-4
    k = solve_kernel(EvenPowerSeries([lam]), 3, 0, 6)
    for r, rho in ((1.0, 0.5), (0.7, 0.7), (0.4, 0.1)):
        expected = rho ** 2 / r * (-lam / 2)
        assert abs(evaluate_K(k, r, rho) - expected) < 1e-4 * abs(expected)

    print("✓ Leading term correct")
    return True


def test_evenness_rejection():
    """Test that odd reaction terms are rejected and make the mixed system inconsistent"""
    print("Testing evenness rejection...")

    raw = RawSeries([1.0, 0.1])
    try:
        validate_even(raw, 1e-12)
        assert False, "Odd reaction accepted"
    except EvennessViolation as e:
        assert e.index == 1

    for l in (1, 2, 4):
        _, residual = dense_mixed_parity_oracle(raw, 3, l, 4)
        assert residual > 1e-3, f"l={l}: mixed-parity system consistent (residual {residual:.2e})"

    even = RawSeries.from_even(EvenPowerSeries([2.0, -1.0, 0.5]))
    _, residual = dense_mixed_parity_oracle(even, 3, 1, 6)
    assert residual < 1e-8, f"Even reaction gave an inconsistent mixed system ({residual:.2e})"

    print("✓ Odd terms rejected")
    return True


def test_order_overflow():
    """Test the truncation-order cap"""
    print("Testing order cap...")

    try:
        solve_kernel(BALL_REACTION, 3, 0, 50, max_order=40)
        assert False, "Order above cap accepted"
    except OrderOverflow as e:
        assert e.order == 50 and e.cap == 40

    print("✓ Order cap enforced")
    return True


def test_kernel_serialization():
    """Test JSON round trip and load_kernel"""
    print("Testing kernel serialization...")

    k = solve_kernel(BALL_REACTION, 3, 4, 15)
    back = kernel_from_dict(json.loads(json.dumps(kernel_to_dict(k))))
    assert back.n == k.n and back.l == k.l and back.order == k.order
    assert back.gamma_prime == k.gamma_prime
    assert np.array_equal(back.C, k.C)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'kernel.json'
        with open(path, 'w') as f:
            json.dump(kernel_to_dict(k), f)
        assert np.array_equal(load_kernel(path).C, k.C)

    print("✓ Kernels round-trip exactly")
    return True


def test_threaded_solves_are_deterministic():
    """Test that the thread pool gives the same kernels as sequential solves"""
    print("Testing threaded kernel solves...")

    config = {'solver': {'order': 15}, 'runtime': {'threads': 4, 'progress': False}}
    kernels = KernelSolver(config).solve_degrees(BALL_REACTION, 3, range(11))
    assert sorted(kernels) == list(range(11))
    for l, k in kernels.items():
        assert np.array_equal(k.C, solve_kernel(BALL_REACTION, 3, l, 15).C)

    print("✓ Threaded solves identical")
    return True


def run_all_tests():
    """Run all tests"""
    print("=" * 70)
    print("Running Kernel Solver Tests")
    print("=" * 70)
    print()

    tests = [
        test_kappa_examples,
        test_kappa_identity,
        test_a_coeff,
        test_zero_reaction_gives_zero_kernel,
        test_constant_reaction_first_rows,
        test_kernel_constraints_ball_reaction,
        test_recurrence_matches_dense_oracle,
        test_pde_residual_matched_degrees,
        test_pde_residual_truncation_decay,
        test_evaluate_G_and_K,
        test_constant_reaction_K_leading_term,
        test_evenness_rejection,
        test_order_overflow,
        test_kernel_serialization,
        test_threaded_solves_are_deterministic,
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
