#!/usr/bin/env python3
"""
Pre-flight checks for the ball backstepping toolkit

Checks that the sources parse, that every third-party import is pinned in
requirements.txt, and that config.yaml describes a run the pipeline can
finish: validated values, snapshots inside the horizon and a band limit
that reaches every unstable degree.
"""

import ast
import importlib.util
import sys
from pathlib import Path

# import name -> distribution name in requirements.txt
DISTRIBUTIONS = {'yaml': 'pyyaml'}
SOURCES = ['main.py', 'demo.py', 'setup.py'] + sorted(str(p) for p in Path('src').glob('*.py'))


def _imports(tree: ast.AST):
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            yield from (alias.name.split('.')[0] for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
            yield node.module.split('.')[0]


def check_sources():
    """Parse every source and collect its top-level imports"""
    print("Parsing sources...")
    imported, ok = set(), True
    for filepath in SOURCES:
        try:
            tree = ast.parse(Path(filepath).read_text(), filename=filepath)
        except (OSError, SyntaxError) as e:
            print(f"  ✗ {filepath} - {e}")
            ok = False
            continue
        imported.update(_imports(tree))
        print(f"  ✓ {filepath}")
    return ok, imported


def _third_party(name: str) -> bool:
    spec = importlib.util.find_spec(name)
    if spec is None:
        return True
    origin = spec.origin or ''
    return 'site-packages' in origin or 'dist-packages' in origin


def check_requirements(imported):
    """Every third-party import must be declared"""
    print("\nChecking requirements.txt...")
    declared = set()
    for line in Path('requirements.txt').read_text().splitlines():
        line = line.split('#')[0].strip()
        if line:
            declared.add(line.split('>')[0].split('=')[0].split('<')[0].strip().lower())

    local = {'src', 'main', 'setuptools'}
    third_party = sorted(name for name in imported
                         if name not in local and _third_party(name))
    missing = [name for name in third_party if DISTRIBUTIONS.get(name, name) not in declared]
    for name in third_party:
        print(f"  {'✗' if name in missing else '✓'} {name}")
    return not missing


def check_run_config(path='config.yaml'):
    """Load config.yaml through the pipeline's own validation"""
    print(f"\nChecking {path}...")
    try:
        from src.config import load_config
        from src.errors import BallControlError
        from src.mode_analysis import build_mode_plan
    except ImportError as e:
        print(f"  ⚠ {e.name} not installed, skipping run checks")
        return True

    try:
        config = load_config(path)
        plan = build_mode_plan(config.lambda_series, config.problem['c'], config.epsilon_unit,
                               config.problem['n'])
    except BallControlError as e:
        print(f"  ✗ {e}")
        return False
    print(f"  ✓ validated, L_cutoff = {plan.L_cutoff}, predicted decay rate {plan.predicted_D:.3f}")

    sim, output, ok = config.sim, config.output, True
    if plan.controlled_degrees and sim['band_limit'] < plan.controlled_degrees[-1]:
        print(f"  ✗ band_limit {sim['band_limit']} leaves unstable degrees up to "
              f"{plan.controlled_degrees[-1]} out of the field")
        ok = False
    if sim['dt'] > sim['t_end']:
        print(f"  ✗ dt {sim['dt']} exceeds t_end {sim['t_end']}")
        ok = False
    if config.solver['order'] > config.solver['max_order']:
        print(f"  ✗ solver.order {config.solver['order']} exceeds max_order {config.solver['max_order']}")
        ok = False
    # the open-loop horizon is its last snapshot
    late = [t for t in output['snapshot_times']['closed'] if not 0.0 <= t <= sim['t_end']]
    if late:
        print(f"  ✗ snapshot_times.closed {late} outside [0, {sim['t_end']}]")
        ok = False
    if ok:
        print("  ✓ band limit, horizon and snapshots consistent")
    return ok


def main():
    """Main validation"""
    print("=" * 60)
    print("Ball Backstepping Toolkit - Pre-flight Checks")
    print("=" * 60)
    print()

    parsed, imported = check_sources()
    results = [
        ("Source syntax", parsed),
        ("Declared dependencies", check_requirements(imported)),
        ("Run configuration", check_run_config()),
    ]

    print("\n" + "=" * 60)
    print("Validation Summary")
    print("=" * 60)
    for name, passed in results:
        print(f"{name:.<40} {'✓ PASS' if passed else '✗ FAIL'}")
    print("=" * 60)

    return 0 if all(passed for _, passed in results) else 1


if __name__ == "__main__":
    sys.exit(main())
