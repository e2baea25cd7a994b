"""Energies on P_2(R^d) with evaluation, proximal maps and convexity checks.

Four kinds of functional are supported:

  Potential          F(mu) = sum_i w_i V(x_i)
  Interaction        F(mu) = sum_ij w_i w_j W(x_i - x_j)
  QuadraticToTarget  F(mu) = W2^2(mu, target)
  GridEntropy        F(mu) = sum_i w_i log w_i on a fixed grid, +inf off the grid

evaluate() returns math.inf outside the proper domain instead of raising.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from config.catalog import INTERACTION_CATALOG, POTENTIAL_CATALOG
from config.settings import Config
from w2checks.convergence import default_window, tail_liminf
from w2checks.geodesy import (
    coupling_cost,
    generalized_geodesic_at,
    generalized_geodesic_plan,
    interpolate,
)
from w2checks.measure import DiscreteMeasure, MeasureError, grid_measure, pushforward
from w2checks.transport import solve_ot, w2_squared

log = logging.getLogger(__name__)


class FunctionalError(ValueError):
    """Raised for malformed functional specs or off-domain preconditions."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class ProxError(RuntimeError):
    """Raised when a proximal point cannot be computed."""

    def __init__(self, message, name=None, tau=None, original_error=None):
        self.name = name
        self.tau = tau
        self.original_error = original_error
        super().__init__(message)


@dataclass(frozen=True)
class Convexity:
    geodesic: bool
    generalized_geodesic: bool
    eulerian_convex: bool


@dataclass(frozen=True, eq=False)
class Potential:
    name: str
    value: object
    grad: object = None
    prox: object = None
    params: dict = field(default_factory=dict)
    convexity: Convexity = Convexity(True, True, True)
    kind = "potential"


@dataclass(frozen=True, eq=False)
class Interaction:
    name: str
    kernel: object
    grad: object = None
    params: dict = field(default_factory=dict)
    convexity: Convexity = Convexity(True, True, False)
    kind = "interaction"


@dataclass(frozen=True, eq=False)
class QuadraticToTarget:
    target: DiscreteMeasure
    kind = "quadratic_to_target"
    name = "w2_squared"

    @property
    def convexity(self):
        # W2^2(., target) is geodesically convex on the line, and along any
        # curve when the target is a Dirac.
        dirac = self.target.size == 1
        return Convexity(self.target.dim == 1 or dirac, dirac, True)


@dataclass(frozen=True, eq=False)
class GridEntropy:
    grid: np.ndarray
    kind = "grid_entropy"
    name = "grid_entropy"
    convexity = Convexity(False, False, True)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim == 1:
            grid = grid.reshape(-1, 1)
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class ConvexityReport:
    satisfied: bool
    worst_violation: float
    witness: tuple
    plain_worst: float = 0.0
    strengthened_worst: float = 0.0


@dataclass(frozen=True)
class LscReport:
    values: list
    tail_min: float
    limit_value: float
    window: int
    satisfied: bool


@dataclass(frozen=True)
class SublevelReport:
    level: float
    values: list
    limit_value: float
    premise_holds: bool
    satisfied: bool


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _catalog_entry(catalog, name, params, kind):
    try:
        entry = catalog[name]
    except KeyError:
        raise FunctionalError(
            f"unknown {kind} {name!r}; choose from {sorted(catalog)}", field="name"
        ) from None
    params = dict(params or {})
    for spec in entry['parameters']:
        if spec['required'] and spec['id'] not in params:
            raise FunctionalError(f"{kind} {name!r} requires parameter {spec['id']!r}", field="params")
        params.setdefault(spec['id'], spec['default'])
    unknown = set(params) - {spec['id'] for spec in entry['parameters']}
    if unknown:
        raise FunctionalError(f"{kind} {name!r} got unknown parameters {sorted(unknown)}", field="params")
    return entry, params


def potential(name, params=None):
    entry, params = _catalog_entry(POTENTIAL_CATALOG, name, params, "potential")
    parts = entry['build'](params)
    return Potential(name, parts['value'], parts['grad'], parts['prox'], params,
                     Convexity(**entry['convexity']))


def interaction(name="quadratic", params=None):
    entry, params = _catalog_entry(INTERACTION_CATALOG, name, params, "interaction")
    parts = entry['build'](params)
    return Interaction(name, parts['value'], parts['grad'], params, Convexity(**entry['convexity']))


def functional_from_dict(data):
    """Build a functional from {"kind": ..., "name": ..., "params": {...}}."""
    if not isinstance(data, dict) or "kind" not in data:
        raise FunctionalError("functional spec must be an object with a 'kind'", field="kind")
    kind = data["kind"]
    params = data.get("params") or {}
    if kind == "potential":
        return potential(data.get("name", ""), params)
    if kind == "interaction":
        return interaction(data.get("name", "quadratic"), params)
    if kind == "quadratic_to_target":
        if "target" not in params:
            raise FunctionalError("quadratic_to_target needs params.target", field="params")
        return QuadraticToTarget(DiscreteMeasure.from_dict(params["target"]))
    if kind == "grid_entropy":
        if "points" in params:
            return GridEntropy(params["points"])
        if "dims" in params:
            return GridEntropy(grid_measure(params["dims"], params.get("spacing", 1.0)).points)
        raise FunctionalError("grid_entropy needs params.points or params.dims", field="params")
    raise FunctionalError(f"unknown functional kind {kind!r}", field="kind")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def grid_indices(grid, points):
    """Index of each point in the grid, or None when some point is off the grid."""
    keys = {tuple(np.round(g, Config.MERGE_DECIMALS) + 0.0): k for k, g in enumerate(grid)}
    found = [keys.get(tuple(np.round(p, Config.MERGE_DECIMALS) + 0.0)) for p in points]
    if any(k is None for k in found):
        return None
    return np.array(found, dtype=int)


def check_dimension(F, dim):
    """Raise MeasureError when F cannot act on measures in R^dim."""
    if F.kind == "potential":
        for key in ("a", "c"):
            value = F.params.get(key)
            if value is not None and np.size(value) not in (1, dim):
                raise MeasureError(
                    f"potential {F.name!r} has {key} in R^{np.size(value)}, measure in R^{dim}",
                    field="dim", value=np.size(value),
                )
    elif F.kind == "quadratic_to_target" and F.target.dim != dim:
        raise MeasureError(f"target is in R^{F.target.dim}, measure in R^{dim}", field="dim")
    elif F.kind == "grid_entropy" and F.grid.shape[1] != dim:
        raise MeasureError(f"grid is in R^{F.grid.shape[1]}, measure in R^{dim}", field="dim")


def _pairwise(points):
    return points[:, None, :] - points[None, :, :]


def evaluate(F, mu):
    """F(mu) as a float, math.inf outside the domain of F."""
    check_dimension(F, mu.dim)
    if F.kind == "quadratic_to_target":
        return w2_squared(mu, F.target)
    if F.kind == "grid_entropy":
        index = grid_indices(F.grid, mu.points)
        if index is None:
            return math.inf
        weights = np.bincount(index, weights=mu.weights, minlength=F.grid.shape[0])
        return float(np.sum(xlogy(weights, weights)))
    try:
        if F.kind == "potential":
            value = float(np.dot(mu.weights, F.value(mu.points)))
        else:
            value = float(mu.weights @ F.kernel(_pairwise(mu.points)) @ mu.weights)
    except ValueError as exc:
        raise MeasureError(f"{F.kind} {F.name!r} cannot act on R^{mu.dim}: {exc}", field="dim") from exc
    return value if math.isfinite(value) else math.inf


def in_domain(F, mu):
    return evaluate(F, mu) < math.inf


def weight_gradient(F, grid, weights):
    """Derivative of w -> F(sum_i w_i delta_{grid_i}) with respect to each weight."""
    check_dimension(F, grid.shape[1])
    if F.kind == "potential":
        return np.asarray(F.value(grid), dtype=float)
    if F.kind == "interaction":
        K = F.kernel(_pairwise(grid))
        return (K + K.T) @ weights
    if F.kind == "grid_entropy":
        index = grid_indices(F.grid, grid)
        if index is None:
            raise FunctionalError("Eulerian grid is not contained in the entropy grid", field="grid")
        return np.log(np.maximum(weights, 1e-300)) + 1.0
    if F.kind == "quadratic_to_target":
        return solve_ot(DiscreteMeasure(grid, weights), F.target).phi
    raise FunctionalError(f"no weight gradient for kind {F.kind!r}", field="kind")


# ---------------------------------------------------------------------------
# Convexity checks
# ---------------------------------------------------------------------------

def _endpoint_values(F, measures):
    values = [evaluate(F, mu) for mu in measures]
    if not all(math.isfinite(v) for v in values):
        raise FunctionalError("convexity checks need endpoints in the domain of F")
    return values


def check_geodesic_convexity(F, mu0, mu1, t_grid=Config.S_GRID_DEFAULT, atol=Config.CONVEXITY_ATOL):
    """Largest F(mu_t) - (1 - t) F(mu0) - t F(mu1) along the optimal-plan geodesic."""
    F0, F1 = _endpoint_values(F, (mu0, mu1))
    plan = solve_ot(mu0, mu1).plan
    worst, witness = -math.inf, ()
    for t in t_grid:
        excess = evaluate(F, interpolate(plan, t)) - (1.0 - t) * F0 - t * F1
        if excess > worst:
            worst, witness = excess, (mu0, mu1, float(t))
    return ConvexityReport(worst <= atol, worst, witness, plain_worst=worst)


def check_generalized_convexity(F, base, mu0, mu1, tau, t_grid=Config.S_GRID_DEFAULT,
                                atol=Config.GENERALIZED_CONVEXITY_ATOL):
    """Plain and Phi_tau-strengthened convexity along a generalized geodesic.

    Phi_tau(base, nu) = F(nu) + W2^2(base, nu) / (2 tau). The strengthened
    inequality subtracts t (1 - t) c / (2 tau), where c is the squared cost
    of the glued coupling between mu0 and mu1.
    """
    if tau <= 0:
        raise FunctionalError(f"tau must be positive, got {tau}", field="tau")
    F0, F1 = _endpoint_values(F, (mu0, mu1))
    gamma = generalized_geodesic_plan(base, mu0, mu1)
    modulus = coupling_cost(gamma)
    Phi0 = F0 + w2_squared(base, mu0) / (2.0 * tau)
    Phi1 = F1 + w2_squared(base, mu1) / (2.0 * tau)

    plain_worst = strong_worst = -math.inf
    witness = ()
    for t in t_grid:
        nu = generalized_geodesic_at(gamma, t)
        Ft = evaluate(F, nu)
        plain = Ft - (1.0 - t) * F0 - t * F1
        strong = (Ft + w2_squared(base, nu) / (2.0 * tau)
                  - (1.0 - t) * Phi0 - t * Phi1 + t * (1.0 - t) * modulus / (2.0 * tau))
        if max(plain, strong) > max(plain_worst, strong_worst):
            witness = (base, mu0, mu1, float(t), "plain" if plain >= strong else "strengthened")
        plain_worst = max(plain_worst, plain)
        strong_worst = max(strong_worst, strong)
    worst = max(plain_worst, strong_worst)
    return ConvexityReport(worst <= atol, worst, witness, plain_worst, strong_worst)


def check_weak_lsc(F, seq, limit, window=None, atol=1e-7):
    """Tail minimum of F(mu_n) against F(limit) for a convergent sequence."""
    window = window or default_window(len(seq))
    values = [evaluate(F, mu) for mu in seq]
    tail_min = tail_liminf(values, window)
    limit_value = evaluate(F, limit)
    return LscReport(values, tail_min, limit_value, window, tail_min >= limit_value - atol)


def check_sublevel_closure(F, seq, limit, level, window=None, atol=1e-7):
    """If the tail of the sequence lies in {F <= level}, so must its limit."""
    window = window or default_window(len(seq))
    values = [evaluate(F, mu) for mu in seq]
    premise = all(v <= level + atol for v in values[-window:])
    limit_value = evaluate(F, limit)
    return SublevelReport(level, values, limit_value, premise,
                          (not premise) or limit_value <= level + atol)


# ---------------------------------------------------------------------------
# Proximal maps
# ---------------------------------------------------------------------------

def _numeric_prox(F, tau):
    def prox(x):
        def objective(y):
            return float(np.sum((y - x) ** 2) / (2.0 * tau) + F.value(y[None, :])[0])

        jac = None
        if F.grad is not None:
            def jac(y):
                return (y - x) / tau + F.grad(y[None, :])[0]

        result = minimize(objective, x, jac=jac, method="BFGS", options={"gtol": 1e-12})
        if not result.success and result.status != 2:
            raise ProxError(f"prox solver failed for {F.name!r}: {result.message}",
                            name=F.name, tau=tau)
        return result.x
    return prox


def prox_potential(F, tau, mu):
    """Push mu forward under x -> argmin_y |y - x|^2 / (2 tau) + V(y)."""
    if F.kind != "potential":
        raise ProxError(f"prox_potential needs a potential, got {F.kind}", name=F.name, tau=tau)
    if tau <= 0:
        raise ProxError(f"tau must be positive, got {tau}", name=F.name, tau=tau)
    check_dimension(F, mu.dim)
    if F.prox is not None:
        try:
            images = F.prox(tau, mu.points)
        except ValueError as exc:
            raise ProxError(str(exc), name=F.name, tau=tau, original_error=exc) from exc
        return pushforward(mu, lambda points: images)
    if not F.convexity.geodesic:
        raise ProxError(f"no proximal map for non-convex potential {F.name!r}", name=F.name, tau=tau)
    log.debug("numeric prox for %s at tau=%g on %d atoms", F.name, tau, mu.size)
    return pushforward(mu, _numeric_prox(F, tau), pointwise=True)
