"""Displacement interpolation and generalized geodesics in P_2(R^d).

When the optimal plan is not unique the plan returned by solve_ot is the
one used, so geodesic() yields a geodesic between the endpoints, not a
distinguished one.
"""

import logging
from dataclasses import dataclass

import numpy as np

from config.settings import Config
from w2checks.measure import DiscreteMeasure, ProductMeasure, measures_equal, merge_atoms
from w2checks.transport import TransportError, glue, solve_ot, w2

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeodesicSample:
    s: float
    measure: DiscreteMeasure

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"geodesic parameter {self.s} outside [0, 1]")


@dataclass(frozen=True)
class ConstantSpeedReport:
    satisfied: bool
    length: float
    worst_error: float
    worst_pair: tuple
    pairs_checked: int


def _check_unit(s, name="s"):
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"{name}={s} outside [0, 1]")


def interpolate(plan, s):
    """Push the plan forward under (x, y) -> (1 - s) x + s y."""
    _check_unit(s)
    entries = plan.entries()
    rows = [i for i, _, _ in entries]
    cols = [j for _, j, _ in entries]
    points = (1.0 - s) * plan.source.points[rows] + s * plan.target.points[cols]
    merged, weights = merge_atoms(points, [m for _, _, m in entries])
    return DiscreteMeasure(merged, weights)


def geodesic(mu0, mu1, grid=Config.S_GRID_DEFAULT):
    """Samples of s -> interpolate(optimal plan, s) on the given grid."""
    for s in grid:
        _check_unit(s)
    plan = solve_ot(mu0, mu1).plan
    return [GeodesicSample(float(s), interpolate(plan, s)) for s in grid]


def check_constant_speed(samples, mu0, mu1, rtol=Config.CONSTANT_SPEED_RTOL):
    """Check W2(mu_s, mu_t) = |t - s| W2(mu0, mu1) on every sample pair."""
    length = w2(mu0, mu1)
    worst, worst_pair, count = 0.0, (), 0
    for a in range(len(samples)):
        for b in range(a + 1, len(samples)):
            sa, sb = samples[a], samples[b]
            expected = abs(sb.s - sa.s) * length
            error = abs(w2(sa.measure, sb.measure) - expected)
            count += 1
            if error > worst:
                worst, worst_pair = error, (sa.s, sb.s)
    satisfied = worst <= rtol * max(1.0, length)
    if not satisfied:
        log.debug("constant speed off by %.3e at s-pair %s", worst, worst_pair)
    return ConstantSpeedReport(satisfied, length, worst, worst_pair, count)


def generalized_geodesic_plan(base, mu0, mu1):
    """3-plan in Gamma(base, mu0, mu1) glued from two optimal plans out of base.

    When mu0 and mu1 coincide the plan out of base is glued onto itself
    along the diagonal, so every point of the curve is mu0.
    """
    if not base.dim == mu0.dim == mu1.dim:
        raise TransportError(
            "generalized geodesic needs a common dimension",
            source_dim=base.dim,
            target_dim=(mu0.dim, mu1.dim),
        )
    if measures_equal(mu0, mu1):
        return _diagonal_glue(solve_ot(base, mu0).plan)
    return glue(solve_ot(base, mu0).plan, solve_ot(base, mu1).plan)


def _diagonal_glue(plan):
    # gamma(i, j, k) = plan(i, j) [j = k]
    entries = plan.entries()
    rows = [i for i, _, _ in entries]
    cols = [j for _, j, _ in entries]
    targets = plan.target.points[cols]
    return ProductMeasure(
        (plan.source.points[rows], targets, targets.copy()),
        np.array([m for _, _, m in entries]),
    )


def coupling_cost(gamma, first=1, second=2):
    """Squared cost of the (first, second) two-slot projection of a product plan."""
    diff = gamma.slots[first] - gamma.slots[second]
    return float(np.dot(gamma.weights, np.sum(diff * diff, axis=1)))


def generalized_geodesic_at(gamma, t):
    _check_unit(t, "t")
    points = (1.0 - t) * gamma.slots[1] + t * gamma.slots[2]
    merged, weights = merge_atoms(points, gamma.weights)
    return DiscreteMeasure(merged, weights)


def generalized_geodesic(base, mu0, mu1, t):
    """Point at time t of the generalized geodesic from mu0 to mu1 with base point base."""
    _check_unit(t, "t")
    return generalized_geodesic_at(generalized_geodesic_plan(base, mu0, mu1), t)
