"""Artifact exporter module"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src.gains import GainTable
from src.kernel_solver import KernelCoefficients, ResidualReport, kernel_to_dict
from src.mode_analysis import ModePlan
from src.radial_sim import SimReport

FLOAT_FORMAT = '%.17g'


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars and arrays become Python values, nan and inf become None"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return [_clean(value.real), _clean(value.imag)]
    return value


class ArtifactExporter:
    """Write kernels, gains, trajectories and summaries under the output directory"""

    def __init__(self, config: Dict[str, Any]):
        """
        Initialize artifact exporter

        Args:
            config: Configuration dictionary
        """
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.output_config = config['output']
        self.output_path = Path(self.output_config['path'])
        formats = self.output_config.get('formats', ['json', 'csv'])
        self.write_csv = 'csv' in formats
        self.write_json = 'json' in formats

    def _dir(self, name: str) -> Path:
        path = self.output_path / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _write_json(self, path: Path, data: Any) -> str:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(_clean(data), f, indent=2, sort_keys=True)
        self.logger.debug(f"Wrote {path}")
        return str(path)

    def _write_csv(self, path: Path, header: Sequence[str], rows: np.ndarray) -> str:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.atleast_2d(rows), fmt=FLOAT_FORMAT, delimiter=',',
                   header=','.join(header), comments='')
        self.logger.debug(f"Wrote {path}")
        return str(path)

    def export_kernel(self, k: KernelCoefficients) -> str:
        """Kernel coefficients as JSON; load_kernel reads them back exactly"""
        return self._write_json(self._dir('kernels') / f"kernel_n{k.n}_l{k.l:03d}.json", kernel_to_dict(k))

    def export_gain_table(self, table: GainTable) -> str:
        """
        Gain table as CSV plus a JSON sidecar

        Args:
            table: control or observer gain

        Returns:
            Path to the CSV file
        """
        base = self._dir('gains') / f"{table.kind}_gain_l{table.l:03d}"
        rows = np.column_stack([table.nodes, table.weights, table.values])
        path = self._write_csv(base.with_suffix('.csv'), ('node', 'weight', 'value'), rows)
        self._write_json(base.with_suffix('.json'), table.metadata())
        return path

    def export_kernel_surface(self, l: int, surface: np.ndarray) -> str:
        return self._write_csv(self._dir('kernels') / f"surface_l{l:03d}.csv", ('r', 'rho', 'K'), surface)

    def export_residuals(self, reports: Iterable[ResidualReport], tolerance: float) -> str:
        reports = list(reports)
        data = {
            'tolerance': tolerance,
            'all_passed': all(r.passed(tolerance) for r in reports),
            'kernels': [r.to_dict() for r in reports],
        }
        return self._write_json(self.output_path / 'residuals.json', data)

    def export_mode_plan(self, plan: ModePlan) -> str:
        return self._write_json(self.output_path / 'mode_plan.json', plan.to_dict())

    def export_trajectories(self, reports: Dict[Tuple[int, int], SimReport], label: str) -> List[str]:
        """
        Per-mode time series

        CSV columns: time, l2_norm, control_re, control_im and, with an
        observer, observer_error_norm.
        """
        written = []
        if self.write_csv:
            directory = self._dir(f"trajectories_{label}")
            for (l, m), report in reports.items():
                columns = [report.times, report.l2_norms, report.control_signal.real, report.control_signal.imag]
                header = ['time', 'l2_norm', 'control_re', 'control_im']
                if report.observer_error_norms is not None:
                    columns.append(report.observer_error_norms)
                    header.append('observer_error_norm')
                written.append(self._write_csv(directory / f"mode_l{l:03d}_m{m:+04d}.csv", header,
                                               np.column_stack(columns)))
        if self.write_json:
            rates = {
                f"{l},{m}": {
                    'fitted_decay_rate': r.fitted_decay_rate,
                    'observer_decay_rate': r.observer_decay_rate,
                    'initial_norm': r.l2_norms[0],
                    'final_norm': r.l2_norms[-1],
                }
                for (l, m), r in reports.items()
            }
            written.append(self._write_json(self.output_path / f"modes_{label}.json", rates))
        self.logger.info(f"Exported {len(reports)} mode trajectories ({label})")
        return written

    def export_series(self, name: str, header: Sequence[str], rows: np.ndarray) -> str:
        """Generic time series table (field statistics, probes, control effort)"""
        return self._write_csv(self.output_path / f"{name}.csv", header, rows)

    def export_field_snapshot(self, theta1: np.ndarray, theta2: np.ndarray, values: np.ndarray,
                              radius: float, time: float, label: str) -> str:
        """Field on the angular grid as rows (theta1, theta2, value)"""
        rows = np.column_stack([np.ravel(theta1), np.ravel(theta2), np.ravel(values)])
        name = f"{label}_r{radius:.3f}_t{time:.3f}.csv"
        return self._write_csv(self._dir('fields') / name, ('theta1', 'theta2', 'value'), rows)

    def export_summary(self, summary: Dict[str, Any], name: str = 'summary') -> str:
        path = self._write_json(self.output_path / f"{name}.json", summary)
        self.logger.info(f"Summary written to {path}")
        return path
