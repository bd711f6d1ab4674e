"""
Backstepping boundary control on n-balls
Main entry point for kernel computation and closed-loop simulation
"""

import sys
import logging
import argparse
from typing import Any, Dict, List, Optional, Tuple
from pathlib import Path

import numpy as np

from src.config import RunConfig, apply_overrides, load_config
from src.errors import BallControlError, ResidualCheckFailure
from src.exporter import ArtifactExporter
from src.gains import control_gain, inverse_kernel, kernel_surface, observer_gain
from src.harmonics import AngularGrid, ModeSet, admissible_modes, basis_matrix, synthesize
from src.initial_state import observer_noise_modes, random_initial_modes
from src.kernel_solver import KernelCoefficients, KernelSolver, ResidualReport
from src.mode_analysis import ModePlan, build_mode_plan
from src.radial_sim import ModeSimulator, ModeState, RadialGrid, SimConfig, SimReport

SPHERE_AREA = {2: 2.0 * np.pi, 3: 4.0 * np.pi}


class BallControlPipeline:
    """Main pipeline for gain computation and simulation"""

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                 verbose: bool = False, quiet: bool = False):
        """
        Initialize the pipeline

        Args:
            config_path: Path to a YAML or JSON configuration file (built-in defaults when None)
            overrides: Command-line overrides (seed, threads, out, loop, t_end, band_limit)
            verbose: Log at DEBUG level
            quiet: Only log warnings and errors, no progress bars
        """
        config = load_config(config_path)
        if overrides:
            config = apply_overrides(config, **{k: v for k, v in overrides.items() if v is not None})
        self.run_config: RunConfig = config
        if quiet or not sys.stderr.isatty():
            config.runtime['progress'] = False
        self.config = config.to_dict()

        self._setup_directories()
        self._setup_logging(verbose, quiet)

        self.kernel_solver = KernelSolver(self.config)
        self.exporter = ArtifactExporter(self.config)

        problem = self.config['problem']
        self.logger.info(f"Pipeline initialized for n={problem['n']}, R={problem['R']}, "
                         f"epsilon={problem['epsilon']}, c={problem['c']}")
        if problem['R'] != 1.0:
            self.logger.info(f"Unit-ball epsilon: {self.run_config.epsilon_unit}")

    def _setup_logging(self, verbose: bool, quiet: bool):
        """Setup logging configuration"""
        level = logging.DEBUG if verbose else (logging.WARNING if quiet else logging.INFO)
        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(Path(self.config['output']['path']) / 'ballstep.log'),
                logging.StreamHandler()
            ]
        )
        self.logger = logging.getLogger(__name__)

    def _setup_directories(self):
        """Create necessary directories"""
        Path(self.config['output']['path']).mkdir(parents=True, exist_ok=True)

    @property
    def n(self) -> int:
        return self.config['problem']['n']

    def mode_plan(self) -> ModePlan:
        problem = self.config['problem']
        return build_mode_plan(self.run_config.lambda_series, problem['c'], self.run_config.epsilon_unit, self.n)

    def solve_kernels(self, degrees) -> Dict[int, KernelCoefficients]:
        return self.kernel_solver.solve_degrees(self.run_config.reaction, self.n, degrees)

    def run_modeplan(self) -> ModePlan:
        plan = self.mode_plan()
        self.exporter.export_mode_plan(plan)
        self.logger.info(f"Controlled degrees: {plan.controlled_degrees}")
        return plan

    def run_kernel(self) -> Tuple[Dict[int, KernelCoefficients], List[ResidualReport]]:
        """
        Solve, check and export kernels for every controlled degree

        Returns:
            (kernels by degree, residual reports)
        """
        self.logger.info("Step 1: Mode plan")
        plan = self.run_modeplan()

        self.logger.info("Step 2: Solving kernels")
        output = self.config['output']
        gain_degrees = [l for l in output['gain_degrees'] if l >= 0]
        kernels = self.solve_kernels(set(plan.controlled_degrees) | set(gain_degrees))

        self.logger.info("Step 3: Checking kernels against the kernel PDE")
        reaction = self.run_config.reaction
        reports = [self.kernel_solver.check(kernels[l], reaction) for l in plan.controlled_degrees]
        for l in plan.controlled_degrees:
            self.exporter.export_kernel(kernels[l])
        self.exporter.export_residuals(reports, self.kernel_solver.tolerance)

        self.logger.info("Step 4: Exporting gains")
        grid = RadialGrid.uniform(self.config['sim']['grid_points'])
        diagnostics = []
        for l in sorted(gain_degrees):
            k = kernels[l]
            self.exporter.export_gain_table(control_gain(k, grid.nodes))
            self.exporter.export_gain_table(observer_gain(k, self.run_config.epsilon_unit, grid.nodes))
            self.exporter.export_kernel_surface(l, kernel_surface(k, output['surface_samples']))
            diagnostics.append(inverse_kernel(k, grid.nodes).summary())
        self.exporter.export_summary({'inverse_kernels': diagnostics}, 'inverse_diagnostics')

        failed = [r.l for r in reports if not r.passed(self.kernel_solver.tolerance)]
        if failed:
            raise ResidualCheckFailure(f"Kernel residual check failed for degrees {failed}")
        self.logger.info(f"{len(reports)} kernels passed the residual check")
        return kernels, reports

    def _initial_fields(self, grid: RadialGrid, angular: AngularGrid, band_limit: int,
                        with_noise: bool) -> Tuple[ModeSet, Optional[ModeSet], Dict[str, Any]]:
        sim = self.config['sim']
        rng = np.random.default_rng(sim['seed'])
        initial, law = random_initial_modes(self.n, band_limit, grid, angular, rng,
                                            sim['initial']['low'], sim['initial']['high'])
        noise = None
        if with_noise:
            noise = observer_noise_modes(self.n, band_limit, grid, angular, rng,
                                         sim['observer_noise']['sigma2'])
            law['observer_noise'] = {'law': 'pointwise normal, projected on the harmonics',
                                     'sigma2': sim['observer_noise']['sigma2']}
        law['seed'] = sim['seed']
        return initial, noise, law

    def run_simulate(self, loop: Optional[str] = None, t_end: Optional[float] = None,
                     kernels: Optional[Dict[int, KernelCoefficients]] = None) -> Dict[str, Any]:
        """
        Simulate every mode up to the band limit and export trajectories and field statistics

        Args:
            loop: loop mode (config value when None)
            t_end: final time (config value when None)
            kernels: previously solved kernels; solved on the fly when None

        Returns:
            Run summary
        """
        sim, output = self.config['sim'], self.config['output']
        loop = loop or sim['loop']
        t_end = sim['t_end'] if t_end is None else t_end
        band_limit = sim['band_limit']
        n = self.n

        plan = self.mode_plan()
        if kernels is None and loop != 'open':
            kernels = self.solve_kernels(plan.controlled_degrees)
        kernels = kernels or {}

        grid = RadialGrid.uniform(sim['grid_points'])
        angular = AngularGrid.for_band_limit(n, band_limit)
        observing = loop == 'output-feedback'
        initial_modes, noise, law = self._initial_fields(grid, angular, band_limit, observing)

        initial = {key: ModeState(n, key[0], key[1], initial_modes.coefficients[key], grid)
                   for key in initial_modes.keys()}
        observer_initial = None
        if observing:
            observer_initial = {key: ModeState(n, key[0], key[1],
                                               initial_modes.coefficients[key] - noise.coefficients[key], grid)
                                for key in initial_modes.keys()}

        cfg = SimConfig(epsilon=self.run_config.epsilon_unit, c=self.config['problem']['c'],
                        reaction=self.run_config.lambda_series, grid=grid, dt=sim['dt'], t_end=t_end,
                        n=n, scheme=sim['scheme'], loop=loop, record_every=sim['record_every'])
        snapshot_times = output['snapshot_times']['open' if loop == 'open' else 'closed']
        simulator = ModeSimulator(cfg, threads=self.config['runtime']['threads'],
                                  progress=self.config['runtime']['progress'],
                                  snapshot_times=snapshot_times, probe_radii=output['probe_radii'])
        reports = simulator.simulate(kernels, plan, initial, observer_initial)

        label = loop.replace('-', '_')
        self.exporter.export_trajectories(reports, label)
        statistics = self._field_statistics(reports, grid)
        self.exporter.export_series(f"field_{label}", list(statistics.keys()), np.column_stack(list(statistics.values())))
        self._export_probes(reports, label)
        self._export_effort(reports, label)
        self._export_snapshots(reports, angular, grid, label)

        summary = {
            'loop': loop,
            'scheme': sim['scheme'],
            't_end': t_end,
            'seed': sim['seed'],
            'initial_state': law,
            'mode_plan': plan.to_dict(),
            'initial_field_l2': statistics['field_l2'][0],
            'final_field_l2': statistics['field_l2'][-1],
            'initial_mean': statistics['mean'][0],
            'final_mean': statistics['mean'][-1],
            'degree_decay_rates': {str(l): reports[(l, 0)].fitted_decay_rate
                                   for l in range(band_limit + 1) if (l, 0) in reports},
        }
        if observing:
            summary['initial_error_l2'] = statistics['error_l2'][0]
            summary['final_error_l2'] = statistics['error_l2'][-1]
        self.exporter.export_summary(summary, f"summary_{label}")
        self.logger.info(f"Simulation ({loop}) finished: field L2 {summary['initial_field_l2']:.6g} -> "
                         f"{summary['final_field_l2']:.6g}")
        return summary

    def _field_statistics(self, reports: Dict[Tuple[int, int], SimReport], grid: RadialGrid) -> Dict[str, np.ndarray]:
        """Full-field L2 norm by Parseval and the ball average from the (0, 0) mode"""
        first = next(iter(reports.values()))
        stats = {'time': first.times}
        stats['field_l2'] = np.sqrt(sum(r.l2_norms ** 2 for r in reports.values()))
        mean_factor = self.n / np.sqrt(SPHERE_AREA[self.n])
        stats['mean'] = mean_factor * reports[(0, 0)].moments.real
        if first.observer_error_norms is not None:
            stats['error_l2'] = np.sqrt(sum(r.observer_error_norms ** 2 for r in reports.values()))
            stats['error_mean'] = mean_factor * reports[(0, 0)].error_moments.real
        return stats

    def _mode_basis(self, keys: List[Tuple[int, int]], theta1, theta2) -> np.ndarray:
        """Basis columns reordered to the report keys"""
        band_limit = max(l for l, _ in keys)
        full = basis_matrix(self.n, band_limit, theta1, theta2)
        order = {key: i for i, key in enumerate(admissible_modes(self.n, band_limit))}
        return full[:, [order[key] for key in keys]]

    def _export_probes(self, reports: Dict[Tuple[int, int], SimReport], label: str):
        output = self.config['output']
        keys = list(reports)
        first = reports[keys[0]]
        if first.probes is None:
            return
        angles = np.asarray(output['probe_angles'], dtype=float)
        basis = self._mode_basis(keys, angles[:, 0], angles[:, 1])
        for name, attr in (('probes', 'probes'), ('error_probes', 'error_probes')):
            if getattr(first, attr) is None:
                continue
            stacked = np.stack([getattr(reports[key], attr) for key in keys])  # modes x records x radii
            values = np.einsum('krp,ak->rpa', stacked, basis).real
            header = ['time'] + [f"r{r:g}_a{a}" for r in first.probe_radii for a in range(len(angles))]
            rows = np.column_stack([first.times, values.reshape(values.shape[0], -1)])
            self.exporter.export_series(f"{name}_{label}", header, rows)

    def _export_effort(self, reports: Dict[Tuple[int, int], SimReport], label: str):
        """Boundary control sum_lm U_lm(t) Y_lm over a polar sweep at fixed azimuths"""
        output = self.config['output']
        keys = list(reports)
        first = reports[keys[0]]
        sweep = np.linspace(0.0, np.pi if self.n == 3 else 2.0 * np.pi, output['effort_samples'])
        controls = np.stack([reports[key].control_signal for key in keys])  # modes x records
        rows = []
        for azimuth in output['effort_azimuths']:
            basis = self._mode_basis(keys, sweep, np.full_like(sweep, azimuth))
            effort = (basis @ controls).real  # sweep x records
            for i, t in enumerate(first.times):
                rows.append(np.column_stack([np.full(sweep.size, t), np.full(sweep.size, azimuth), sweep, effort[:, i]]))
        self.exporter.export_series(f"control_effort_{label}", ['time', 'theta2', 'theta1', 'value'], np.vstack(rows))

    def _export_snapshots(self, reports: Dict[Tuple[int, int], SimReport], angular: AngularGrid,
                          grid: RadialGrid, label: str):
        radius = self.config['output']['snapshot_radius']
        band_limit = self.config['sim']['band_limit']
        first = next(iter(reports.values()))
        theta1, theta2 = angular.points()
        for attr, prefix in (('snapshots', 'u'), ('error_snapshots', 'error')):
            for t in sorted(getattr(first, attr)):
                modes = ModeSet(self.n, band_limit, {key: getattr(r, attr)[t] for key, r in reports.items()})
                field = synthesize(modes, angular, r=radius, radial_nodes=grid.nodes).real
                self.exporter.export_field_snapshot(theta1, theta2, field, radius, t, f"{prefix}_{label}")

    def run_reproduce(self) -> Dict[str, Any]:
        """Kernels, gains, the open loop and the output-feedback loop with one seed"""
        self.logger.info("Reproducing the n=3 ball experiment")
        kernels, reports = self.run_kernel()
        open_horizon = max(self.config['output']['snapshot_times']['open'])
        open_summary = self.run_simulate(loop='open', t_end=open_horizon)
        closed_summary = self.run_simulate(loop='output-feedback', kernels=kernels)
        summary = {
            'seed': self.config['sim']['seed'],
            'kernels': [r.to_dict() for r in reports],
            'open_loop': open_summary,
            'output_feedback': closed_summary,
            'config': self.config,
        }
        self.exporter.export_summary(summary, 'reproduction')
        return summary


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = argparse.ArgumentParser(
        description='Backstepping boundary control of reaction-diffusion equations on n-balls',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py kernel --config config.yaml
  python main.py simulate --loop full-state --t-end 1.0
  python main.py reproduce-paper --out results/ --seed 7
  python main.py modeplan
        """
    )
    parser.add_argument('command', choices=['kernel', 'simulate', 'reproduce-paper', 'modeplan'])
    parser.add_argument('--config', type=str, default=None,
                        help='Path to YAML/JSON configuration file (default: built-in n=3 setup)')
    parser.add_argument('--out', type=str, help='Output directory')
    parser.add_argument('--seed', type=int, help='Random seed for initial fields and observer noise')
    parser.add_argument('--threads', type=int, help='Worker threads for kernels and degrees')
    parser.add_argument('--loop', choices=['open', 'full-state', 'output-feedback', 'target'],
                        help='Loop mode for simulate')
    parser.add_argument('--t-end', type=float, dest='t_end', help='Final simulation time')
    parser.add_argument('--band-limit', type=int, dest='band_limit', help='Highest harmonic degree')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')

    args = parser.parse_args(argv)

    try:
        pipeline = BallControlPipeline(
            config_path=args.config,
            overrides={'seed': args.seed, 'threads': args.threads, 'out': args.out,
                       'loop': args.loop, 't_end': args.t_end, 'band_limit': args.band_limit},
            verbose=args.verbose,
            quiet=args.quiet
        )
        if args.command == 'kernel':
            pipeline.run_kernel()
        elif args.command == 'simulate':
            pipeline.run_simulate()
        elif args.command == 'reproduce-paper':
            pipeline.run_reproduce()
        else:
            pipeline.run_modeplan()
    except BallControlError as e:
        logging.getLogger(__name__).error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logging.getLogger(__name__).error(f"Unexpected error: {e}", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
