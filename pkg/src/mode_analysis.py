"""Open-loop stability cutoff and target decay rates"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List

from src.errors import NonPositiveDiffusion, ValidationError
from src.series import EvenPowerSeries, sup_on_unit_interval

logger = logging.getLogger(__name__)


@dataclass
class ModePlan:
    """Which harmonic degrees get a boundary controller, and the rates to expect"""

    n: int
    L_cutoff: int
    controlled_degrees: List[int] = field(default_factory=list)
    predicted_D2: float = 0.0
    predicted_D1: float = 0.0
    predicted_D: float = 0.0
    reaction_sup: float = 0.0
    epsilon: float = 1.0
    c: float = 0.0

    def is_controlled(self, l: int) -> bool:
        return l < self.L_cutoff

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'L_cutoff': self.L_cutoff,
            'controlled_degrees': list(self.controlled_degrees),
            'predicted_D1': self.predicted_D1,
            'predicted_D2': self.predicted_D2,
            'predicted_D': self.predicted_D,
            'reaction_sup': self.reaction_sup,
            'epsilon': self.epsilon,
            'c': self.c,
        }


def unstable_mode_bound(reaction_sup: float, epsilon: float, n: int) -> int:
    """
    Smallest degree l with epsilon * l(l+n-2) > sup lambda

    Args:
        reaction_sup: sup of lambda(r) over [0, 1], without c
        epsilon: diffusion coefficient
        n: ball dimension

    Returns:
        First open-loop stable degree; 0 when lambda <= 0 everywhere
    """
    if not epsilon > 0:
        raise NonPositiveDiffusion(epsilon)
    if n < 2:
        raise ValidationError(f"Ball dimension must be >= 2, got n={n}")
    if not math.isfinite(reaction_sup):
        raise ValidationError(f"Reaction supremum must be finite, got {reaction_sup}")
    if reaction_sup <= 0:
        return 0
    l = 0
    while not epsilon * l * (l + n - 2) > reaction_sup:
        l += 1
    return l


def target_decay_rate(c: float, epsilon: float) -> float:
    """D2 = 2c + epsilon/2, decay rate of the squared target-system norm on the unit ball"""
    if epsilon <= 0:
        raise NonPositiveDiffusion(epsilon)
    if c < 0:
        raise ValidationError(f"Target damping c must be >= 0, got {c}")
    return 2.0 * c + epsilon / 2.0


def open_loop_decay_rate(reaction_sup: float, epsilon: float, n: int, L: int) -> float:
    """Energy-estimate rate D1 = 2(epsilon/4 + epsilon L(L+n-2) - sup lambda) for degrees >= L"""
    return 2.0 * (epsilon / 4.0 + epsilon * L * (L + n - 2) - reaction_sup)


def build_mode_plan(lambda_series: EvenPowerSeries, c: float, epsilon: float, n: int) -> ModePlan:
    """
    Mode plan for a unit-ball problem

    Args:
        lambda_series: even series of lambda(r) alone (c and epsilon not folded in)
        c: target damping
        epsilon: diffusion coefficient
        n: ball dimension
    """
    sup = sup_on_unit_interval(lambda_series)
    L = unstable_mode_bound(sup, epsilon, n)
    d2 = target_decay_rate(c, epsilon)
    d1 = open_loop_decay_rate(sup, epsilon, n, L)
    plan = ModePlan(n=n, L_cutoff=L, controlled_degrees=list(range(L)),
                    predicted_D2=d2, predicted_D1=d1, predicted_D=min(d1, d2),
                    reaction_sup=sup, epsilon=epsilon, c=c)
    logger.info(f"Mode plan: sup lambda={sup:.6g}, L={L}, D1={d1:.6g}, D2={d2:.6g}")
    return plan
