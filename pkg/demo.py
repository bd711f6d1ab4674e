"""
Demo script for the backstepping pipeline on a small problem
Writes a reduced configuration and runs kernels plus a short closed loop in seconds
"""

import sys
import yaml
from pathlib import Path
import logging

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

DEMO_DIR = Path("demo_output")


def create_demo_config():
    """Write a coarse configuration for a quick run"""
    logger.info("Creating demo configuration...")

    with open('config.yaml', 'r') as f:
        config = yaml.safe_load(f)

    config['solver']['order'] = 12
    config['sim'].update({
        'grid_points': 60,
        'dt': 5.0e-4,
        't_end': 0.5,
        'band_limit': 3,
        'record_every': 20,
    })
    config['output'].update({
        'path': str(DEMO_DIR),
        'snapshot_times': {'open': [0.0, 0.1], 'closed': [0.25, 0.5]},
        'gain_degrees': [0, 1],
        'effort_samples': 37,
        'surface_samples': 11,
    })

    DEMO_DIR.mkdir(parents=True, exist_ok=True)
    config_path = DEMO_DIR / 'demo_config.yaml'
    with open(config_path, 'w') as f:
        yaml.dump(config, f, default_flow_style=False, sort_keys=False)

    logger.info(f"Demo configuration written: {config_path}")
    return config_path


def run_demo():
    """Run the reproduction pipeline on the demo configuration"""
    from main import BallControlPipeline

    config_path = create_demo_config()
    logger.info("Running backstepping pipeline on the demo problem...")

    try:
        pipeline = BallControlPipeline(config_path=str(config_path))
        plan = pipeline.run_modeplan()
        logger.info(f"Controlled degrees: {plan.controlled_degrees}, predicted decay rate {plan.predicted_D:.3f}")
        summary = pipeline.run_reproduce()
        closed = summary['output_feedback']
        logger.info(f"Demo completed! Final field L2 {closed['final_field_l2']:.4g}, "
                    f"output saved to: {DEMO_DIR}")
        return 0
    except Exception as e:
        logger.error(f"Demo failed: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(run_demo())
