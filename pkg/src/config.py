"""Run configuration: loading, defaults, validation and unit-ball rescaling"""

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import yaml

from src.errors import BallControlError, ConfigError
from src.series import EvenPowerSeries, RawSeries, reaction_series, rescale_to_unit_ball, validate_even

logger = logging.getLogger(__name__)

OUTPUT_ENV = 'BALLSTEP_OUTPUT'

DEFAULTS: Dict[str, Any] = {
    'problem': {
        'n': 3,
        'R': 1.0,
        'epsilon': 1.0,
        'c': 3.0,
        'lambda_even_coeffs': [50.0, 50.0, 10.0],
        'evenness_tolerance': 1e-12,
    },
    'solver': {
        'order': 15,
        'max_order': 400,
        'tolerance': 1e-10,
    },
    'sim': {
        'grid_points': 200,
        'dt': 1e-4,
        't_end': 2.0,
        'loop': 'output-feedback',
        'scheme': 'coupled',
        'band_limit': 12,
        'record_every': 100,
        'seed': 20240607,
        'initial': {'low': 0.0, 'high': 10.0},
        'observer_noise': {'sigma2': 0.5},
    },
    'output': {
        'path': 'output/',
        'formats': ['json', 'csv'],
        'probe_radii': [0.002, 0.3, 0.5, 0.8],
        'probe_angles': [[np.pi, 0.0], [np.pi, np.pi / 4]],
        'effort_azimuths': [np.pi / 4, 3 * np.pi / 8],
        'effort_samples': 181,
        'snapshot_radius': 0.8,
        'snapshot_times': {'open': [0.0, 0.18, 0.2], 'closed': [0.1, 0.2, 0.4, 2.0]},
        'gain_degrees': [0, 1, 2, 3, 4, 5],
        'surface_samples': 41,
    },
    'runtime': {
        'threads': 1,
        'progress': True,
    },
}

LOOPS = ('open', 'full-state', 'output-feedback', 'target')
SCHEMES = ('coupled', 'split')
FORMATS = ('json', 'csv')


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _number(section: Dict[str, Any], key: str, path: str, kind=float,
            minimum: Optional[float] = None, strict: bool = False):
    value = section.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}.{key}", f"must be finite, got {value}")
    if kind is int and float(value) != int(value):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
    value = kind(value)
    if minimum is not None:
        if strict and not value > minimum:
            raise ConfigError(f"{path}.{key}", f"must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {value}")
    return value


def _number_list(value, path: str):
    if not isinstance(value, (list, tuple)) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigError(path, f"expected a list of numbers, got {value!r}")
    if not all(math.isfinite(v) for v in value):
        raise ConfigError(path, f"entries must be finite, got {value!r}")
    return [float(v) for v in value]


@dataclass
class RunConfig:
    """
    Validated run configuration

    The sections keep the document's layout; the unit-ball quantities used
    by every solve are derived once on construction.
    """

    problem: Dict[str, Any]
    solver: Dict[str, Any]
    sim: Dict[str, Any]
    output: Dict[str, Any]
    runtime: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self._validate()
        lam = self.problem.get('lambda_coeffs')
        tol = self.problem['evenness_tolerance']
        if lam is not None:
            even = validate_even(RawSeries(_number_list(lam, 'problem.lambda_coeffs')), tol).coeffs
        else:
            even = np.array(_number_list(self.problem['lambda_even_coeffs'], 'problem.lambda_even_coeffs'))
        self.lambda_unit, self.epsilon_unit = rescale_to_unit_ball(even, self.problem['epsilon'], self.problem['R'])

    def _validate(self):
        p, s, sim, out = self.problem, self.solver, self.sim, self.output
        p['n'] = _number(p, 'n', 'problem', int, minimum=2)
        p['R'] = _number(p, 'R', 'problem', minimum=0.0, strict=True)
        p['epsilon'] = _number(p, 'epsilon', 'problem', minimum=0.0, strict=True)
        p['c'] = _number(p, 'c', 'problem', minimum=0.0)
        p['evenness_tolerance'] = _number(p, 'evenness_tolerance', 'problem', minimum=0.0)
        if p.get('lambda_coeffs') is None and not p.get('lambda_even_coeffs'):
            raise ConfigError('problem.lambda_even_coeffs', "a non-empty coefficient list is required")

        s['order'] = _number(s, 'order', 'solver', int, minimum=0)
        s['max_order'] = _number(s, 'max_order', 'solver', int, minimum=0)
        s['tolerance'] = _number(s, 'tolerance', 'solver', minimum=0.0, strict=True)

        sim['grid_points'] = _number(sim, 'grid_points', 'sim', int, minimum=3)
        sim['dt'] = _number(sim, 'dt', 'sim', minimum=0.0, strict=True)
        sim['t_end'] = _number(sim, 't_end', 'sim', minimum=0.0)
        sim['band_limit'] = _number(sim, 'band_limit', 'sim', int, minimum=0)
        sim['record_every'] = _number(sim, 'record_every', 'sim', int, minimum=1)
        sim['seed'] = _number(sim, 'seed', 'sim', int, minimum=0)
        if sim['loop'] not in LOOPS:
            raise ConfigError('sim.loop', f"expected one of {LOOPS}, got {sim['loop']!r}")
        if sim['scheme'] not in SCHEMES:
            raise ConfigError('sim.scheme', f"expected one of {SCHEMES}, got {sim['scheme']!r}")
        low = _number(sim['initial'], 'low', 'sim.initial')
        high = _number(sim['initial'], 'high', 'sim.initial')
        if not high > low:
            raise ConfigError('sim.initial', f"high must exceed low, got [{low}, {high}]")
        _number(sim['observer_noise'], 'sigma2', 'sim.observer_noise', minimum=0.0)

        unknown = [f for f in out.get('formats', []) if f not in FORMATS]
        if unknown:
            raise ConfigError('output.formats', f"unsupported formats {unknown}, expected a subset of {FORMATS}")
        radii = _number_list(out['probe_radii'], 'output.probe_radii')
        if any(not 0.0 <= r <= 1.0 for r in radii):
            raise ConfigError('output.probe_radii', "probe radii must lie in [0, 1]")
        for angle in out['probe_angles']:
            if len(_number_list(angle, 'output.probe_angles')) != 2:
                raise ConfigError('output.probe_angles', f"expected (theta1, theta2) pairs, got {angle!r}")
        if not isinstance(out.get('path'), str) or not out['path']:
            raise ConfigError('output.path', "an output directory is required")

    @property
    def reaction(self) -> EvenPowerSeries:
        """(lambda + c) / epsilon on the unit ball, the kernel solver's input"""
        return reaction_series(self.lambda_unit, self.problem['c'], self.epsilon_unit)

    @property
    def lambda_series(self) -> EvenPowerSeries:
        """lambda(r) alone on the unit ball"""
        return EvenPowerSeries(self.lambda_unit)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'problem': copy.deepcopy(self.problem),
            'solver': copy.deepcopy(self.solver),
            'sim': copy.deepcopy(self.sim),
            'output': copy.deepcopy(self.output),
            'runtime': copy.deepcopy(self.runtime),
            'unit_ball': {
                'epsilon': self.epsilon_unit,
                'lambda_even_coeffs': [float(v) for v in self.lambda_unit],
            },
        }

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> 'RunConfig':
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError('<root>', "configuration must be a mapping")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration section")
        merged = _merge(DEFAULTS, raw)
        if 'lambda_coeffs' in raw.get('problem', {}) and 'lambda_even_coeffs' not in raw.get('problem', {}):
            merged['problem'].pop('lambda_even_coeffs', None)
        try:
            return cls(**merged)
        except BallControlError:
            raise
        except (TypeError, KeyError, ValueError) as e:
            raise ConfigError('<root>', str(e))


def _read_document(path: Path) -> Dict[str, Any]:
    """JSON for .json files, since YAML 1.1 reads 1e-4 as a string; YAML otherwise"""
    with open(path, 'r') as f:
        text = f.read()
    if path.suffix.lower() == '.json':
        try:
            return json.loads(text) or {}
        except json.JSONDecodeError as e:
            raise ConfigError('--config', f"could not parse {path}: {e}")
    try:
        return yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError('--config', f"could not parse {path}: {e}")


def load_config(config_path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a YAML or JSON configuration file

    Args:
        config_path: path to the document; None gives the built-in defaults

    Returns:
        Validated RunConfig
    """
    raw: Dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError('--config', f"file not found: {path}")
        raw = _read_document(path)
    config = RunConfig.from_dict(raw)
    env_output = os.environ.get(OUTPUT_ENV)
    if env_output:
        logger.info(f"Output directory overridden by {OUTPUT_ENV}: {env_output}")
        config.output['path'] = env_output
    return config


def apply_overrides(config: RunConfig, seed: Optional[int] = None, threads: Optional[int] = None,
                    out: Optional[str] = None, loop: Optional[str] = None,
                    t_end: Optional[float] = None, band_limit: Optional[int] = None) -> RunConfig:
    """Apply command-line overrides and re-validate"""
    data = config.to_dict()
    data.pop('unit_ball')
    if seed is not None:
        data['sim']['seed'] = seed
    if threads is not None:
        if threads < 1:
            raise ConfigError('--threads', f"must be >= 1, got {threads}")
        data['runtime']['threads'] = threads
    if out is not None:
        data['output']['path'] = out
    if loop is not None:
        data['sim']['loop'] = loop
    if t_end is not None:
        data['sim']['t_end'] = t_end
    if band_limit is not None:
        data['sim']['band_limit'] = band_limit
    return RunConfig(**data)
