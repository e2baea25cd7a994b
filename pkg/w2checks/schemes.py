"""Minimizing movements, EVI particle flows and fixed-point iteration.

Every inequality a scheme is expected to satisfy is recorded as a
residual (positive means violated) and compared against the solver
epsilon of the run, never against zero.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from config.settings import Config
from w2checks.convergence import MeasureSequence, opial_residual
from w2checks.functionals import (
    evaluate,
    grid_indices,
    prox_potential,
    weight_gradient,
)
from w2checks.geodesy import interpolate
from w2checks.measure import DiscreteMeasure, merge_atoms, moment, pushforward
from w2checks.transport import cost_matrix, solve_ot, w2, w2_squared

log = logging.getLogger(__name__)

LAGRANGIAN = "lagrangian"
EULERIAN = "eulerian"


class SchemeError(RuntimeError):
    """Raised when a scheme's preconditions fail or its sub-solver gives up."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class FrankWolfeCapError(SchemeError):
    def __init__(self, message, achieved_gap, iterations, step=None):
        self.achieved_gap = achieved_gap
        self.iterations = iterations
        super().__init__(message, step=step)


class FlowError(RuntimeError):
    def __init__(self, message, time=None, original_error=None):
        self.time = time
        self.original_error = original_error
        super().__init__(message)


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = None
    max_iter: int = Config.FW_MAX_ITER
    gap_target: float = Config.FW_GAP
    line_search: bool = True
    grid: np.ndarray = None

    def epsilon_for(self, mode):
        if self.epsilon is not None:
            return self.epsilon
        return Config.EULERIAN_EPSILON if mode == EULERIAN else Config.LAGRANGIAN_EPSILON


@dataclass(frozen=True)
class JKOTrace:
    tau: float
    mode: str
    epsilon: float
    measures: list
    energies: list
    step_w2: list
    residual_eq60: list
    residual_6bis: list
    residual_perconv: list
    w2_to_probe: dict = field(default_factory=dict)
    bounded: bool = True

    def energy_monotone(self, atol=Config.MONOTONE_ATOL):
        return bool(np.all(np.diff(self.energies) <= atol))

    def probe_monotone(self, name, atol=Config.MONOTONE_ATOL):
        return bool(np.all(np.diff(self.w2_to_probe[name]) <= atol))


@dataclass(frozen=True)
class ResolventReport:
    taus: list
    distances: list
    energies: list
    reference_energy: float
    distances_decreasing: bool
    energies_increasing: bool
    distance_ratio: float
    energy_gap: float
    passed: bool


@dataclass(frozen=True)
class FlowTrace:
    times: list
    measures: list
    energies: list
    evi_residuals: dict = field(default_factory=dict)

    def energy_monotone(self, atol=Config.MONOTONE_ATOL):
        return bool(np.all(np.diff(self.energies) <= atol))


@dataclass(frozen=True)
class MapIterTrace:
    lam: float
    measures: list
    step_w2: list
    nonexpansive: bool
    nonexpansive_worst: float
    asymptotically_regular: bool
    candidate_distances: list
    candidate_monotone: list
    fixed_point_residual: float
    bounded: bool
    candidate_fixed_point: DiscreteMeasure = None


# ---------------------------------------------------------------------------
# JKO
# ---------------------------------------------------------------------------

def _lagrangian_step(F, mu, tau):
    if F.kind == "potential":
        return prox_potential(F, tau, mu)
    if F.kind == "quadratic_to_target":
        # minimizer of W2^2(nu, target) + W2^2(nu, mu) / (2 tau) sits on the
        # geodesic from mu to target at s = 2 tau / (1 + 2 tau)
        return interpolate(solve_ot(mu, F.target).plan, 2.0 * tau / (1.0 + 2.0 * tau))
    raise SchemeError(f"Lagrangian mode has no exact step for {F.kind}; use Eulerian mode")


def _line_step(F, grid, w, d, linear, objective):
    """Exact minimizer over [0, 1] of g -> F(w + g d) + g * linear."""
    if F.kind == "potential":
        slope = float(np.dot(weight_gradient(F, grid, w), d)) + linear
        return 1.0 if slope < 0 else 0.0
    if F.kind == "interaction":
        K = F.kernel(grid[:, None, :] - grid[None, :, :])
        curvature = float(d @ K @ d)
        slope = float(w @ (K + K.T) @ d) + linear
        if curvature <= 0:
            return 1.0 if slope + curvature < 0 else 0.0
        return float(np.clip(-slope / (2.0 * curvature), 0.0, 1.0))
    if F.kind == "grid_entropy":
        def derivative(g):
            return float(np.dot(d, np.log(np.maximum(w + g * d, 1e-300)) + 1.0)) + linear

        if derivative(0.0) >= 0:
            return 0.0
        if derivative(1.0) <= 0:
            return 1.0
        return float(brentq(derivative, 0.0, 1.0, xtol=1e-15))
    result = minimize_scalar(objective, bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": 1e-12})
    step = float(result.x)
    return 1.0 if objective(1.0) < objective(step) else step


def _eulerian_step(F, mu, tau, params, epsilon):
    """Frank-Wolfe over couplings P between the grid and mu.

    G(P) = F(P 1) + <C, P> / (2 tau). The linear oracle sends each column
    of P to the grid row minimizing grad G, which is the c-transform of the
    weight gradient of F. With line search on, each column trades mass
    from its worst occupied row to the oracle row (pairwise steps) and the
    step length is exact; otherwise plain steps of length 2 / (k + 2).
    """
    if params.grid is None:
        raise SchemeError("Eulerian mode needs solver_params.grid")
    grid = np.asarray(params.grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    rows = grid_indices(grid, mu.points)
    if rows is None:
        raise SchemeError("Eulerian grid does not contain the support of mu")

    C = cost_matrix(DiscreteMeasure(grid, np.full(grid.shape[0], 1.0 / grid.shape[0])), mu)
    b = mu.weights
    P = np.zeros((grid.shape[0], mu.size))
    P[rows, np.arange(mu.size)] = b
    cols = np.arange(mu.size)

    def objective(coupling):
        w = coupling.sum(axis=1)
        return evaluate(F, DiscreteMeasure(grid, w)) + float(np.sum(C * coupling)) / (2.0 * tau)

    gap = math.inf
    for k in range(params.max_iter):
        w = P.sum(axis=1)
        gradient = weight_gradient(F, grid, w)[:, None] + C / (2.0 * tau)
        toward = np.argmin(gradient, axis=0)
        S = np.zeros_like(P)
        S[toward, cols] = b
        gap = float(-np.sum(gradient * (S - P)))
        if gap <= params.gap_target:
            break
        if not params.line_search:
            P = P + 2.0 / (k + 2.0) * (S - P)
            continue
        away = np.argmax(np.where(P > 0, gradient, -np.inf), axis=0)
        moved = P[away, cols]
        direction = np.zeros_like(P)
        direction[away, cols] -= moved
        direction[toward, cols] += moved
        step = _line_step(F, grid, w, direction.sum(axis=1),
                          float(np.sum(C * direction)) / (2.0 * tau),
                          lambda g: objective(P + g * direction))
        if step <= 0.0:
            # no pairwise progress left; fall back to a plain step
            direction = S - P
            step = _line_step(F, grid, w, direction.sum(axis=1),
                              float(np.sum(C * direction)) / (2.0 * tau),
                              lambda g: objective(P + g * direction))
        P = P + step * direction
        P[P < 0] = 0.0
    else:
        if gap > epsilon:
            raise FrankWolfeCapError(
                f"Frank-Wolfe stopped at gap {gap:.3e} after {params.max_iter} iterations",
                achieved_gap=gap,
                iterations=params.max_iter,
            )
        log.warning("Frank-Wolfe hit %d iterations at gap %.3e (accepted, epsilon %.1e)",
                    params.max_iter, gap, epsilon)
    log.debug("Frank-Wolfe finished: gap=%.3e", gap)
    points, weights = merge_atoms(grid, P.sum(axis=1))
    return DiscreteMeasure(points, weights)


def jko_step(F, mu, tau, mode=LAGRANGIAN, solver_params=None):
    """One minimizing-movement step: argmin F(nu) + W2^2(nu, mu) / (2 tau)."""
    if tau <= 0:
        raise SchemeError(f"tau must be positive, got {tau}")
    params = solver_params or SolverParams()
    if mode == LAGRANGIAN:
        return _lagrangian_step(F, mu, tau)
    if mode == EULERIAN:
        return _eulerian_step(F, mu, tau, params, params.epsilon_for(mode))
    raise SchemeError(f"unknown JKO mode {mode!r}")


def _named_probes(probes):
    if probes is None:
        return {}
    if isinstance(probes, dict):
        return dict(probes)
    return {f"p{k}": nu for k, nu in enumerate(probes)}


def jko_run(F, mu0, tau, K, mode=LAGRANGIAN, probes=None, solver_params=None,
            moment_cap=Config.MOMENT_CAP):
    """K JKO steps from mu0 with per-step inequality residuals."""
    params = solver_params or SolverParams()
    epsilon = params.epsilon_for(mode)
    energy = evaluate(F, mu0)
    if not math.isfinite(energy):
        raise SchemeError("initial measure lies outside the domain of the functional", step=0)
    if not F.convexity.generalized_geodesic:
        log.warning("%s is not convex along generalized geodesics; Eq.60 residuals may be positive",
                    F.name)

    probes = _named_probes(probes)
    probe_energy = {}
    for name, nu in probes.items():
        value = evaluate(F, nu)
        if math.isfinite(value):
            probe_energy[name] = value
        else:
            log.warning("probe %s lies outside the domain of %s; skipped in perconv", name, F.name)

    measures, energies = [mu0], [energy]
    to_probe = {name: [w2(mu0, nu)] for name, nu in probes.items()}
    step_w2, eq60, bis, perconv = [], [], [], []
    for k in range(1, K + 1):
        previous = measures[-1]
        try:
            current = jko_step(F, previous, tau, mode, params)
        except SchemeError as exc:
            exc.step = k
            raise
        energy = evaluate(F, current)
        moved = w2_squared(current, previous)
        step_w2.append(math.sqrt(moved))
        eq60.append(energy + moved / tau - energies[-1])
        bis.append(energy + moved / (2.0 * tau) - energies[-1])

        worst = -math.inf
        for name, nu in probes.items():
            now, before = w2_squared(current, nu), to_probe[name][-1] ** 2
            to_probe[name].append(math.sqrt(now))
            if name in probe_energy:
                worst = max(worst, (now - before) / (2.0 * tau) - probe_energy[name]
                            + energy + moved / (2.0 * tau))
        perconv.append(worst if probe_energy else 0.0)
        measures.append(current)
        energies.append(energy)
        log.debug("jko step %d: energy=%.10g step_w2=%.3e eq60=%.3e", k, energy, step_w2[-1], eq60[-1])

    bounded = all(moment(mu, 2.0) <= moment_cap for mu in measures)
    return JKOTrace(tau, mode, epsilon, measures, energies, step_w2, eq60, bis, perconv,
                    to_probe, bounded)


def resolvent_consistency(F, mu, tau_list, mode=LAGRANGIAN, solver_params=None,
                          distance_ratio=0.02, energy_tol=1e-3, atol=Config.MONOTONE_ATOL):
    """Behaviour of mu_tau = J_tau(mu) as tau decreases to zero.

    Distances W2(mu_tau, mu) must be non-increasing and end below
    distance_ratio times the first one; energies must be non-decreasing
    and end within energy_tol of F(mu).
    """
    taus = list(tau_list)
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise SchemeError("tau_list must be strictly decreasing")
    reference = evaluate(F, mu)
    if not math.isfinite(reference):
        raise SchemeError("resolvent consistency needs mu in the domain of the functional")
    distances, energies = [], []
    for tau in taus:
        step = jko_step(F, mu, tau, mode, solver_params)
        distances.append(w2(step, mu))
        energies.append(evaluate(F, step))
    decreasing = bool(np.all(np.diff(distances) <= atol))
    increasing = bool(np.all(np.diff(energies) >= -atol))
    ratio = distances[-1] / distances[0] if distances[0] > 0 else 0.0
    gap = abs(reference - energies[-1])
    return ResolventReport(
        taus, distances, energies, reference, decreasing, increasing, ratio, gap,
        passed=decreasing and increasing and ratio <= distance_ratio and gap <= energy_tol,
    )


# ---------------------------------------------------------------------------
# EVI particle flow
# ---------------------------------------------------------------------------

def _velocity(F, weights, dim):
    if F.kind == "potential":
        def field_(t, y):
            return -F.grad(y.reshape(-1, dim)).reshape(-1)
        return field_

    def field_(t, y):
        x = y.reshape(-1, dim)
        diff = x[:, None, :] - x[None, :, :]
        # gradient of sum_ij w_i w_j W(x_i - x_j) per unit mass at x_i
        drift = np.einsum("j,ijk->ik", weights, F.grad(diff) - F.grad(-diff))
        return -drift.reshape(-1)
    return field_


def evi_flow(F, mu0, t_grid, characteristic_time=Config.CHARACTERISTIC_TIME):
    """Integrate the particle ODE x_i' = -grad_i F and sample it on t_grid."""
    if F.kind not in ("potential", "interaction") or F.grad is None:
        raise SchemeError(f"evi_flow needs a potential or interaction with a gradient, got {F.kind}")
    times = np.asarray(t_grid, dtype=float)
    if times.size < 1 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise SchemeError("t_grid must be strictly increasing and start at 0")
    spacing = float(np.min(np.diff(times))) if times.size > 1 else characteristic_time
    max_step = min(spacing, 1e-3 * characteristic_time)

    y0 = np.array(mu0.points, dtype=float).reshape(-1)
    if times.size == 1:
        states = y0[:, None]
    else:
        try:
            result = solve_ivp(
                _velocity(F, mu0.weights, mu0.dim),
                (0.0, float(times[-1])),
                y0,
                method="RK45",
                t_eval=times,
                rtol=Config.ODE_RTOL,
                atol=Config.ODE_ATOL,
                max_step=max_step,
            )
        except (ValueError, FloatingPointError) as exc:
            raise FlowError(f"particle ODE failed: {exc}", original_error=exc) from exc
        if result.status != 0 or not np.all(np.isfinite(result.y)):
            failed_at = float(result.t[-1]) if result.t.size else 0.0
            log.error("particle ODE stopped at t=%.6g: %s", failed_at, result.message)
            raise FlowError(f"particle ODE stopped at t={failed_at:.6g}: {result.message}",
                            time=failed_at)
        states = result.y

    measures = []
    for column in states.T:
        points, weights = merge_atoms(column.reshape(-1, mu0.dim), mu0.weights)
        measures.append(DiscreteMeasure(points, weights))
    energies = [evaluate(F, mu) for mu in measures]
    return FlowTrace([float(t) for t in times], measures, energies)


def evi_residual(trace, F, sigma, t_index):
    """Symmetric-difference EVI residual at an interior sample.

    [W2^2(mu_{t+h}, sigma) - W2^2(mu_{t-h}, sigma)] / (2 (t_+ - t_-))
    - F(sigma) + F(mu_t); the EVI predicts a value <= O(h).
    """
    if not 0 < t_index < len(trace.times) - 1:
        raise SchemeError(f"t_index {t_index} is not an interior sample of the trace")
    t_minus, t_plus = trace.times[t_index - 1], trace.times[t_index + 1]
    ahead = w2_squared(trace.measures[t_index + 1], sigma)
    behind = w2_squared(trace.measures[t_index - 1], sigma)
    return ((ahead - behind) / (2.0 * (t_plus - t_minus))
            - evaluate(F, sigma) + trace.energies[t_index])


def with_evi_residuals(trace, F, probes, indices):
    """Copy of the trace with evi_residuals[name] = [(index, residual), ...]."""
    table = {
        name: [(int(k), evi_residual(trace, F, sigma, k)) for k in indices]
        for name, sigma in _named_probes(probes).items()
    }
    return replace(trace, evi_residuals=table)


# ---------------------------------------------------------------------------
# Fixed-point iteration
# ---------------------------------------------------------------------------

def averaged_map(T, lam=1.0):
    """Krasnoselskii-Mann average (1 - lam) x + lam T(x)."""
    if not 0.0 < lam <= 1.0:
        raise SchemeError(f"relaxation lambda must lie in (0, 1], got {lam}")
    if lam == 1.0:
        return T
    return lambda x: (1.0 - lam) * x + lam * T(x)


def _apply(T, mu):
    images = np.asarray(T(mu.points), dtype=float)
    if images.shape != mu.points.shape:
        raise SchemeError(
            f"map sends R^{mu.dim} atoms to shape {images.shape}; expected {mu.points.shape}"
        )
    return pushforward(mu, lambda points: images)


def iterate_map(T, mu0, K, lam=1.0, candidates=None, samples=Config.NONEXPANSIVE_SAMPLES,
                seed=0, moment_cap=Config.MOMENT_CAP, regularity_tol=Config.ASYMPTOTIC_REGULARITY_TOL,
                fixed_point_tol=Config.FIXED_POINT_TOL, atol=Config.NONEXPANSIVE_ATOL):
    """Iterate mu -> T_lam # mu and diagnose the fixed-point theorem's hypotheses."""
    if K < 1:
        raise SchemeError(f"need at least one iteration, got K={K}")
    T_lam = averaged_map(T, lam)
    measures = [mu0]
    for _ in range(K):
        measures.append(_apply(T_lam, measures[-1]))
    step_w2 = [w2(measures[k + 1], measures[k]) for k in range(K)]

    # W2(T mu_j, T mu_k) = W2(mu_{j+1}, mu_{k+1}) on sampled pairs j < k < K
    rng = np.random.default_rng(seed)
    pairs = [(j, k) for j in range(K) for k in range(j + 1, K)]
    if len(pairs) > samples:
        pairs = [pairs[i] for i in sorted(rng.choice(len(pairs), size=samples, replace=False))]
    worst = 0.0
    for j, k in pairs:
        worst = max(worst, w2(measures[j + 1], measures[k + 1]) - w2(measures[j], measures[k]))

    quarter = step_w2[-max(1, K // 4):]
    regular = bool(max(quarter) < regularity_tol and np.all(np.diff(quarter) <= atol))

    candidate_distances, candidate_monotone = [], []
    for nu in candidates or []:
        distances = [w2(mu, nu) for mu in measures]
        candidate_distances.append(distances)
        candidate_monotone.append(bool(np.all(np.diff(distances) <= atol)))

    final = measures[-1]
    residual = w2(_apply(T_lam, final), final)
    bounded = all(moment(mu, 2.0) <= moment_cap for mu in measures)
    fixed = final if bounded and regular and residual <= fixed_point_tol else None
    log.debug("iterate_map K=%d lam=%g: last step %.3e, residual %.3e, regular=%s",
              K, lam, step_w2[-1], residual, regular)
    return MapIterTrace(lam, measures, step_w2, worst <= atol, worst, regular,
                        candidate_distances, candidate_monotone, residual, bounded, fixed)


def fixed_point_opial_residual(trace, T, mu, window=None):
    """liminf W2^2(T mu, mu_n) - W2^2(mu, T mu) - liminf W2^2(mu, mu_n).

    For a weak cluster point mu of an asymptotically regular orbit of a
    non-expansive map this is >= 0, and together with non-expansiveness it
    forces T mu = mu.
    """
    T_lam = averaged_map(T, trace.lam)
    return opial_residual(MeasureSequence(tuple(trace.measures)), mu, _apply(T_lam, mu), window)
