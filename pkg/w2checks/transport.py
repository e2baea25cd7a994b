"""Exact discrete optimal transport for the quadratic cost.

solve_ot runs POT's network simplex (ot.emd) on the dense cost matrix and
returns the plan together with Kantorovich potentials in a fixed gauge:
psi has zero mean under the target weights and phi is the c-transform of
psi, so phi_i + psi_j <= |x_i - y_j|^2 holds exactly in floating point.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import ot
from scipy import sparse

from config.settings import Config
from w2checks.measure import DiscreteMeasure, ProductMeasure, merge_atoms

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """Raised for malformed plans, mismatched inputs, or solver failures."""

    def __init__(self, message, source_dim=None, target_dim=None, detail=None):
        self.source_dim = source_dim
        self.target_dim = target_dim
        self.detail = detail
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: DiscreteMeasure
    target: DiscreteMeasure
    mass: sparse.csr_array

    def dense(self):
        return self.mass.toarray()

    def entries(self):
        """Nonzero (i, j, mass) triples sorted lexicographically."""
        coo = self.mass.tocoo()
        triples = [
            (int(i), int(j), float(m))
            for i, j, m in zip(coo.row, coo.col, coo.data)
            if m > 0
        ]
        return sorted(triples)

    def support(self, eps=Config.SUPPORT_MASS_EPS):
        return [(i, j) for i, j, m in self.entries() if m > eps]

    def cost(self):
        return float(sum(
            m * float(np.sum((self.source.points[i] - self.target.points[j]) ** 2))
            for i, j, m in self.entries()
        ))

    def as_product(self):
        entries = self.entries()
        rows = [i for i, _, _ in entries]
        cols = [j for _, j, _ in entries]
        return ProductMeasure(
            (self.source.points[rows], self.target.points[cols]),
            np.array([m for _, _, m in entries]),
        )

    def to_dict(self):
        return {
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
            "entries": [[i, j, m] for i, j, m in self.entries()],
        }


@dataclass(frozen=True, eq=False)
class OTSolution:
    plan: TransportPlan
    squared_cost: float
    phi: np.ndarray
    psi: np.ndarray
    duality_gap: float

    @property
    def w2(self):
        return float(np.sqrt(max(self.squared_cost, 0.0)))

    def dual_infeasibility(self):
        """Largest violation of phi_i + psi_j <= |x_i - y_j|^2 (<= 0 when feasible)."""
        M = cost_matrix(self.plan.source, self.plan.target)
        return float(np.max(self.phi[:, None] + self.psi[None, :] - M))

    def slackness_violation(self, eps=Config.SUPPORT_MASS_EPS):
        """Largest |phi_i + psi_j - c_ij| over the plan's support."""
        M = cost_matrix(self.plan.source, self.plan.target)
        worst = 0.0
        for i, j in self.plan.support(eps):
            worst = max(worst, abs(self.phi[i] + self.psi[j] - M[i, j]))
        return float(worst)


@dataclass(frozen=True)
class CycleReport:
    satisfied: bool
    worst_sum: float
    witness: tuple
    max_cycle: int


@dataclass(frozen=True)
class StabilityReport:
    costs: list
    limit_cost: float
    limit_w2_squared: float
    optimal: bool
    window: int
    tail_min_cost: float
    liminf_ok: bool

    @property
    def passed(self):
        return self.optimal and self.liminf_ok


def _check_dims(mu, nu):
    if mu.dim != nu.dim:
        raise TransportError(
            f"dimension mismatch: source is in R^{mu.dim}, target in R^{nu.dim}",
            source_dim=mu.dim,
            target_dim=nu.dim,
        )


def cost_matrix(mu, nu):
    """Squared Euclidean costs, exact zeros on coincident atoms."""
    _check_dims(mu, nu)
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    return np.sum(diff * diff, axis=-1)


def new_plan(source, target, mass, atol=Config.PLAN_MARGINAL_ATOL):
    """Validate the marginal contracts and build a TransportPlan."""
    _check_dims(source, target)
    dense = np.asarray(mass.toarray() if sparse.issparse(mass) else mass, dtype=float)
    if dense.shape != (source.size, target.size):
        raise TransportError(
            f"mass matrix has shape {dense.shape}, expected {(source.size, target.size)}"
        )
    if np.any(dense < 0):
        raise TransportError(f"negative plan entry {dense.min()!r}")
    row_gap = np.max(np.abs(dense.sum(axis=1) - source.weights))
    col_gap = np.max(np.abs(dense.sum(axis=0) - target.weights))
    if row_gap > atol or col_gap > atol:
        raise TransportError(
            f"plan marginals off by {max(row_gap, col_gap):.3e} (tolerance {atol})",
            detail={"row_gap": float(row_gap), "col_gap": float(col_gap)},
        )
    return TransportPlan(source, target, sparse.csr_array(dense))


def identity_coupling(mu):
    return new_plan(mu, mu, np.diag(mu.weights))


def product_coupling(mu, nu):
    return new_plan(mu, nu, np.outer(mu.weights, nu.weights))


def plan_from_product(gamma):
    """Read a 2-slot ProductMeasure back as a TransportPlan between its marginals."""
    if gamma.n_slots != 2:
        raise TransportError(f"expected a 2-slot plan, got {gamma.n_slots} slots")
    source = DiscreteMeasure(*merge_atoms(gamma.slots[0], gamma.weights))
    target = DiscreteMeasure(*merge_atoms(gamma.slots[1], gamma.weights))
    rows = _locate(source.points, gamma.slots[0])
    cols = _locate(target.points, gamma.slots[1])
    mass = np.zeros((source.size, target.size))
    np.add.at(mass, (rows, cols), gamma.weights)
    return new_plan(source, target, mass)


def _locate(atoms, queries):
    keys = {tuple(np.round(a, Config.MERGE_DECIMALS) + 0.0): k for k, a in enumerate(atoms)}
    return np.array([keys[tuple(np.round(q, Config.MERGE_DECIMALS) + 0.0)] for q in queries], dtype=int)


def solve_ot(mu, nu):
    """Exact W2 optimal plan with certified Kantorovich potentials."""
    M = cost_matrix(mu, nu)
    a = np.ascontiguousarray(mu.weights, dtype=np.float64)
    b = np.ascontiguousarray(nu.weights, dtype=np.float64)
    G, info = ot.emd(a, b, M, numItermax=Config.EMD_MAX_ITER, log=True)
    if info.get("result_code") != 1:
        log.error("network simplex failed on %dx%d instance: %s", mu.size, nu.size, info.get("warning"))
        raise TransportError(
            f"network simplex did not reach optimality: {info.get('warning')}",
            source_dim=mu.dim,
            target_dim=nu.dim,
            detail=info.get("result_code"),
        )
    G = np.maximum(np.asarray(G, dtype=float), 0.0)

    v = np.asarray(info["v"], dtype=float)
    psi = v - float(np.dot(b, v))
    phi = np.min(M - psi[None, :], axis=1)

    squared_cost = float(np.sum(G * M))
    dual_value = float(np.dot(a, phi) + np.dot(b, psi))
    gap = abs(squared_cost - dual_value)
    if gap > Config.DUALITY_GAP_RTOL * (1.0 + squared_cost):
        log.warning("duality gap %.3e above target on %dx%d instance", gap, mu.size, nu.size)
    log.debug("solve_ot %dx%d: cost=%.12g gap=%.3e", mu.size, nu.size, squared_cost, gap)

    plan = TransportPlan(mu, nu, sparse.csr_array(G))
    return OTSolution(plan, squared_cost, phi, psi, gap)


def w2_squared(mu, nu):
    return solve_ot(mu, nu).squared_cost


def w2(mu, nu):
    return solve_ot(mu, nu).w2


def is_cyclically_monotone(plan, max_cycle=None, atol=Config.CYCLE_SUM_ATOL):
    """Exhaustive cyclical-monotonicity check over support cycles.

    A cycle (x^1,y^1),...,(x^L,y^L) of support pairs violates monotonicity
    when sum_k <x^k - x^(k-1), y^k> < -atol (indices mod L). Rotations of a
    cycle give the same sum, so only cycles starting at their smallest
    index are enumerated.
    """
    support = plan.support()
    n = len(support)
    if max_cycle is None:
        max_cycle = min(n, Config.MAX_CYCLE_DEFAULT)
    if n < 2 or max_cycle < 2:
        return CycleReport(True, 0.0, (), max_cycle)

    xs = plan.source.points[[i for i, _ in support]]
    ys = plan.target.points[[j for _, j in support]]
    inner = xs @ ys.T

    worst, witness = np.inf, ()
    for length in range(2, min(max_cycle, n) + 1):
        cycles = np.array([
            (first,) + rest
            for first in range(n)
            for rest in itertools.permutations(range(first + 1, n), length - 1)
        ], dtype=int)
        previous = np.roll(cycles, 1, axis=1)
        sums = (inner[cycles, cycles] - inner[previous, cycles]).sum(axis=1)
        k = int(np.argmin(sums))
        if sums[k] < worst:
            worst = float(sums[k])
            witness = tuple(support[c] for c in cycles[k])
    satisfied = worst >= -atol
    if not satisfied:
        log.debug("cyclical monotonicity violated: sum=%.3e on %s", worst, witness)
    return CycleReport(satisfied, worst, witness if not satisfied else (), max_cycle)


def _same_marginal(mu, nu, atol):
    return (
        mu.size == nu.size
        and mu.dim == nu.dim
        and np.allclose(mu.points, nu.points, atol=atol, rtol=0.0)
        and np.allclose(mu.weights, nu.weights, atol=atol, rtol=0.0)
    )


def glue(g12, g13, atol=Config.PLAN_MARGINAL_ATOL):
    """Glue two plans sharing their first marginal into a 3-slot plan.

    The glued plan makes slots 2 and 3 conditionally independent given
    slot 1: gamma(i, j, k) = g12(i, j) g13(i, k) / w_i.
    """
    if not _same_marginal(g12.source, g13.source, atol):
        raise TransportError("glue needs plans with identical first marginals")
    w = g12.source.weights
    A, B = g12.dense(), g13.dense()
    safe = np.where(w > 0, w, 1.0)
    joint = A[:, :, None] * B[:, None, :] / safe[:, None, None]
    joint[w <= 0] = 0.0
    i, j, k = np.nonzero(joint > 0)
    return ProductMeasure(
        (g12.source.points[i], g12.target.points[j], g13.target.points[k]),
        joint[i, j, k],
    )


def check_plan_stability(plans, limit_plan, window=None, atol=1e-7):
    """Finite-sequence check of the stability of optimal plans.

    Reports whether the proposed limit plan is optimal between its own
    marginals and whether its cost stays below the tail minimum of the
    sequence costs (the liminf surrogate).
    """
    from w2checks.convergence import default_window, tail_liminf

    if not plans:
        raise TransportError("plan stability check needs a nonempty sequence")
    dims = {(s.plan.source.dim, s.plan.target.dim) for s in plans}
    if len(dims) != 1:
        raise TransportError(f"plans couple measures of different dimensions: {sorted(dims)}")
    if window is None:
        window = default_window(len(plans))
    costs = [float(s.squared_cost) for s in plans]
    limit_cost = limit_plan.cost()
    optimum = w2_squared(limit_plan.source, limit_plan.target)
    tail_min = tail_liminf(costs, window)
    return StabilityReport(
        costs=costs,
        limit_cost=limit_cost,
        limit_w2_squared=optimum,
        optimal=abs(limit_cost - optimum) <= atol,
        window=window,
        tail_min_cost=tail_min,
        liminf_ok=limit_cost <= tail_min + atol,
    )
