"""Tests for w2checks.schemes"""

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import xlogy

from config.catalog import MAP_CATALOG
from tests.oracles import batch_quantile_w2_squared, simplex_lattice
from w2checks.functionals import GridEntropy, QuadraticToTarget, evaluate, interaction, potential
from w2checks.measure import dirac, measures_equal, new_discrete, random_measure, uniform
from w2checks.schemes import (
    EULERIAN,
    SchemeError,
    SolverParams,
    evi_flow,
    evi_residual,
    fixed_point_opial_residual,
    iterate_map,
    jko_run,
    jko_step,
    resolvent_consistency,
    with_evi_residuals,
)
from w2checks.transport import w2, w2_squared


def _map(name, **params):
    return MAP_CATALOG[name]['build'](params)


class TestJKOStep:

    def test_quadratic_potential(self):
        assert measures_equal(jko_step(potential("quadratic"), dirac(1.0), 1.0), dirac(0.5))

    @pytest.mark.parametrize("tau", [0.1, 1.0, 3.0])
    def test_squared_distance_to_dirac(self, tau):
        result = jko_step(QuadraticToTarget(dirac(0.0)), dirac(1.0), tau)
        assert measures_equal(result, dirac(1.0 / (1.0 + 2.0 * tau)))

    def test_interaction_needs_eulerian_mode(self):
        with pytest.raises(SchemeError):
            jko_step(interaction("quadratic"), dirac(1.0), 1.0)

    def test_tau_must_be_positive(self):
        with pytest.raises(SchemeError):
            jko_step(potential("zero"), dirac(1.0), 0.0)

    def test_unknown_mode(self):
        with pytest.raises(SchemeError):
            jko_step(potential("zero"), dirac(1.0), 1.0, mode="spectral")


class TestEulerianStep:

    GRID = np.array([[0.0], [0.5], [1.0]])

    @pytest.mark.parametrize("tau", [0.1, 1.0])
    def test_linear_potential_against_grid_search(self, tau):
        F = potential("linear", {"c": [1.0]})
        mu = uniform(self.GRID)
        nu = jko_step(F, mu, tau, EULERIAN, SolverParams(grid=self.GRID))
        objective = evaluate(F, nu) + w2_squared(nu, mu) / (2.0 * tau)

        W = simplex_lattice(999)
        values = W @ self.GRID[:, 0] + batch_quantile_w2_squared(
            self.GRID[:, 0], W, mu.points, mu.weights) / (2.0 * tau)
        assert objective == pytest.approx(float(values.min()), abs=1e-4)

    def test_large_step_moves_all_mass_to_the_minimum(self):
        F = potential("linear", {"c": [1.0]})
        nu = jko_step(F, uniform(self.GRID), 1.0, EULERIAN, SolverParams(grid=self.GRID))
        assert measures_equal(nu, dirac(0.0))

    def test_squared_distance_on_grid(self):
        F = QuadraticToTarget(dirac(0.0))
        nu = jko_step(F, dirac(1.0), 1.0, EULERIAN, SolverParams(grid=self.GRID))
        assert measures_equal(nu, dirac(0.5))

    def test_entropy_against_grid_search(self, caplog):
        F, tau = GridEntropy(self.GRID), 0.1
        mu = new_discrete(self.GRID, [0.6, 0.2, 0.2])
        nu = jko_step(F, mu, tau, EULERIAN, SolverParams(grid=self.GRID))
        objective = evaluate(F, nu) + w2_squared(nu, mu) / (2.0 * tau)

        W = simplex_lattice(999)
        values = np.sum(xlogy(W, W), axis=1) + batch_quantile_w2_squared(
            self.GRID[:, 0], W, mu.points, mu.weights) / (2.0 * tau)
        assert objective <= float(values.min()) + 1e-6
        assert objective == pytest.approx(float(values.min()), abs=1e-4)
        assert "Frank-Wolfe hit" not in caplog.text

    def test_entropy_on_five_points_reaches_the_gap_target(self, caplog):
        grid = np.arange(5, dtype=float).reshape(-1, 1) * 0.25
        F, tau = GridEntropy(grid), 0.1
        mu = new_discrete(grid, [0.6, 0.1, 0.1, 0.1, 0.1])
        nu = jko_step(F, mu, tau, EULERIAN, SolverParams(grid=grid, max_iter=2000))
        objective = evaluate(F, nu) + w2_squared(nu, mu) / (2.0 * tau)

        def reference(z):
            w = np.exp(z - z.max())
            w /= w.sum()
            return float(np.sum(xlogy(w, w)) + batch_quantile_w2_squared(
                grid[:, 0], w[None, :], mu.points, mu.weights)[0] / (2.0 * tau))

        best = minimize(reference, np.log(mu.weights), method="Nelder-Mead",
                        options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000})
        assert objective <= best.fun + 1e-6
        assert "Frank-Wolfe hit" not in caplog.text
        assert evaluate(F, nu) < evaluate(F, mu)

    def test_missing_grid(self):
        with pytest.raises(SchemeError):
            jko_step(potential("quadratic"), dirac(0.0), 1.0, EULERIAN)

    def test_support_off_grid(self):
        with pytest.raises(SchemeError):
            jko_step(potential("quadratic"), dirac(0.25), 1.0, EULERIAN, SolverParams(grid=self.GRID))


class TestJKORun:

    def test_quadratic_recursion(self):
        trace = jko_run(potential("quadratic"), dirac(1.0), 1.0, 10, probes=[dirac(0.0)])
        for k, mu in enumerate(trace.measures):
            assert measures_equal(mu, dirac(2.0 ** -k))
            assert trace.energies[k] == pytest.approx(0.5 * 4.0 ** -k)
        assert max(trace.residual_eq60) <= 1e-6
        assert max(trace.residual_perconv) <= 1e-6
        assert trace.probe_monotone("p0")
        assert trace.energy_monotone()
        assert trace.w2_to_probe["p0"][-1] == pytest.approx(2.0 ** -10)

    def test_start_at_minimizer(self):
        trace = jko_run(potential("quadratic"), dirac(0.0), 0.5, 5, probes={"min": dirac(0.0)})
        assert all(measures_equal(mu, dirac(0.0)) for mu in trace.measures)
        assert trace.residual_eq60 == [0.0] * 5
        assert trace.residual_6bis == [0.0] * 5

    @pytest.mark.parametrize("seed", range(20))
    def test_seeded_lagrangian_runs(self, seed):
        rng = np.random.default_rng(3000 + seed)
        dim = int(rng.integers(1, 3))
        a = rng.uniform(-1.0, 1.0, size=dim)
        name = ("quadratic", "abs", "linear")[seed % 3]
        F = potential(name, {"c": list(a)} if name == "linear" else {"a": list(a)})
        mu0 = random_measure(rng, int(rng.integers(1, 6)), dim, radius=2.0)
        tau = (0.1, 1.0)[seed % 2]
        probes = [random_measure(rng, 2, dim) for _ in range(3)]
        trace = jko_run(F, mu0, tau, 20, probes=probes)

        assert max(trace.residual_6bis) <= 1e-6
        assert max(trace.residual_eq60) <= 1e-6
        assert max(trace.residual_perconv) <= 1e-6
        assert trace.energy_monotone()
        if name != "linear":
            minimizer = dirac(a)
            distances = [w2(mu, minimizer) for mu in trace.measures]
            assert np.all(np.diff(distances) <= 1e-7)
        if name == "quadratic":
            bound = (1.0 + tau) ** -20 * w2(mu0, dirac(a))
            assert w2(trace.measures[-1], dirac(a)) <= bound + 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_seeded_eulerian_runs(self, seed):
        rng = np.random.default_rng(4000 + seed)
        grid = np.arange(9, dtype=float).reshape(-1, 1) * 0.25
        mu0 = new_discrete(grid, rng.dirichlet(np.ones(9)))
        F = potential("quadratic", {"a": [1.0]})
        trace = jko_run(F, mu0, (0.5, 1.0)[seed % 2], 3, mode=EULERIAN,
                        solver_params=SolverParams(grid=grid))
        assert trace.epsilon == pytest.approx(1e-4)
        assert max(trace.residual_6bis) <= trace.epsilon
        assert trace.energy_monotone(atol=trace.epsilon)

    def test_grid_steps_miss_the_exact_step_inequalities(self):
        # same runs as above: Eq.6bis holds on the grid, Eq.60 and perconv
        # are off by grid resolution, well above the solver epsilon
        grid = np.arange(9, dtype=float).reshape(-1, 1) * 0.25
        F = potential("quadratic", {"a": [1.0]})
        worst_eq60, worst_perconv = [], []
        for seed in range(5):
            rng = np.random.default_rng(4000 + seed)
            mu0 = new_discrete(grid, rng.dirichlet(np.ones(9)))
            trace = jko_run(F, mu0, (0.5, 1.0)[seed % 2], 3, mode=EULERIAN,
                            probes={"zero": dirac(0.0), "one": dirac(1.0)},
                            solver_params=SolverParams(grid=grid))
            worst_eq60.append(max(trace.residual_eq60))
            worst_perconv.append(max(trace.residual_perconv))
        spacing_squared = 0.25 ** 2
        assert 1e-4 < max(worst_eq60) < spacing_squared
        assert 1e-4 < max(worst_perconv) < spacing_squared

    def test_off_domain_start(self):
        with pytest.raises(SchemeError) as exc:
            jko_run(GridEntropy([[0.0]]), dirac(1.0), 1.0, 3)
        assert exc.value.step == 0

    def test_failing_step_reports_its_index(self):
        with pytest.raises(SchemeError) as exc:
            jko_run(interaction("quadratic"), dirac(1.0), 1.0, 3)
        assert exc.value.step == 1


class TestResolvent:

    def test_quadratic_prox_as_tau_shrinks(self):
        taus = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001]
        report = resolvent_consistency(potential("quadratic"), dirac(1.0), taus)
        assert report.distances == pytest.approx([t / (1.0 + t) for t in taus])
        assert report.distances_decreasing and report.energies_increasing
        assert report.passed

    def test_short_list_leaves_energy_gap(self):
        report = resolvent_consistency(potential("quadratic"), dirac(1.0), [1.0, 0.1, 0.01])
        assert report.distances_decreasing and report.distance_ratio <= 0.02
        assert report.energy_gap > 1e-3 and not report.passed

    def test_zero_functional(self):
        mu = random_measure(np.random.default_rng(0), 3, 2)
        report = resolvent_consistency(potential("zero"), mu, [1.0, 0.1, 0.01])
        assert report.distances == [0.0, 0.0, 0.0]
        assert report.passed

    def test_squared_distance_at_its_minimizer(self):
        mu = random_measure(np.random.default_rng(1), 3, 1)
        report = resolvent_consistency(QuadraticToTarget(mu), mu, [1.0, 0.1])
        assert report.passed
        assert max(report.distances) == pytest.approx(0.0, abs=1e-12)

    def test_taus_must_decrease(self):
        with pytest.raises(SchemeError):
            resolvent_consistency(potential("zero"), dirac(0.0), [0.1, 1.0])


class TestEVIFlow:

    def test_quadratic_closed_form(self):
        a, x0 = np.array([0.5, -1.0]), np.array([2.0, 1.0])
        times = np.linspace(0.0, 5.0, 51)
        trace = evi_flow(potential("quadratic", {"a": list(a)}), dirac(x0), times)
        for t, mu in zip(trace.times, trace.measures):
            expected = a + np.exp(-t) * (x0 - a)
            np.testing.assert_allclose(mu.points[0], expected, atol=1e-8)

    def test_three_particles(self):
        mu0 = new_discrete([[1.0, 0.0], [0.0, 2.0], [-1.0, -1.0]], [0.2, 0.3, 0.5])
        trace = evi_flow(potential("quadratic"), mu0, np.linspace(0.0, 1.0, 11))
        expected = new_discrete(np.exp(-1.0) * mu0.points, mu0.weights)
        assert measures_equal(trace.measures[-1], expected, atol=1e-8)
        assert trace.energy_monotone()

    def test_zero_potential_is_stationary(self):
        mu0 = random_measure(np.random.default_rng(0), 3, 2)
        trace = evi_flow(potential("zero"), mu0, [0.0, 0.5, 1.0])
        assert all(measures_equal(mu, mu0) for mu in trace.measures)

    def test_interaction_conserves_center_of_mass(self):
        mu0 = new_discrete([[0.0], [1.0]], [0.25, 0.75])
        trace = evi_flow(interaction("quadratic", {"coef": 0.5}), mu0, np.linspace(0.0, 1.0, 11))
        centers = [float(mu.weights @ mu.points[:, 0]) for mu in trace.measures]
        np.testing.assert_allclose(centers, 0.75, atol=1e-10)
        assert trace.energy_monotone()
        assert trace.energies[-1] < trace.energies[0]

    def test_requires_gradient_flow_functional(self):
        with pytest.raises(SchemeError):
            evi_flow(QuadraticToTarget(dirac(0.0)), dirac(1.0), [0.0, 1.0])

    def test_time_grid_starts_at_zero(self):
        with pytest.raises(SchemeError):
            evi_flow(potential("quadratic"), dirac(1.0), [0.5, 1.0])


class TestEVIResidual:

    @pytest.fixture(scope="class")
    def descent(self):
        return evi_flow(potential("quadratic"), dirac(1.0), np.arange(0.0, 1.0005, 1e-3))

    def test_minimizer_probe(self, descent):
        F = potential("quadratic")
        for k in (1, 100, 500, 999):
            assert evi_residual(descent, F, dirac(0.0), k) <= 1e-4

    def test_frozen_probe(self, descent):
        F = potential("quadratic")
        k = 400
        assert evi_residual(descent, F, descent.measures[k], k) <= 1e-4

    def test_stationary_trace(self):
        F = potential("quadratic")
        trace = evi_flow(F, dirac(0.0), [0.0, 0.1, 0.2])
        assert evi_residual(trace, F, dirac(0.0), 1) <= 0.0

    def test_random_probes(self):
        rng = np.random.default_rng(3)
        F = potential("quadratic")
        mu0 = random_measure(rng, 3, 2, radius=2.0)
        trace = evi_flow(F, mu0, np.arange(0.0, 1.0005, 1e-3))
        probes = [random_measure(rng, 2, 2, radius=2.0) for _ in range(10)]
        indices = np.linspace(1, len(trace.times) - 2, 10).astype(int)
        table = with_evi_residuals(trace, F, probes, indices).evi_residuals
        assert len(table) == 10
        assert max(r for rows in table.values() for _, r in rows) <= 1e-3

    def test_boundary_index(self, descent):
        with pytest.raises(SchemeError):
            evi_residual(descent, potential("quadratic"), dirac(0.0), 0)


class TestFixedPointIteration:

    def test_contraction(self):
        trace = iterate_map(_map("contraction", c=0.5), dirac(1.0), 20, candidates=[dirac(0.0)])
        assert measures_equal(trace.measures[-1], dirac(2.0 ** -20))
        assert trace.nonexpansive and trace.asymptotically_regular
        assert trace.candidate_monotone == [True]
        assert trace.candidate_fixed_point is not None

    def test_rotation_is_not_asymptotically_regular(self):
        trace = iterate_map(_map("rotation"), dirac([1.0, 0.0]), 20)
        assert trace.nonexpansive
        assert not trace.asymptotically_regular
        np.testing.assert_allclose(trace.step_w2, np.sqrt(2.0), atol=1e-9)
        assert trace.candidate_fixed_point is None

    def test_averaged_rotation_converges_to_origin(self):
        origin = dirac([0.0, 0.0])
        trace = iterate_map(_map("rotation"), dirac([1.0, 0.0]), 60, lam=0.5, candidates=[origin])
        assert trace.asymptotically_regular
        assert trace.candidate_monotone == [True]
        assert trace.fixed_point_residual <= 1e-4
        assert w2(trace.measures[-1], origin) == pytest.approx(2.0 ** -30, rel=1e-6)
        assert fixed_point_opial_residual(trace, _map("rotation"), origin) == pytest.approx(0.0, abs=1e-12)

    def test_identity_keeps_every_measure(self):
        mu0 = random_measure(np.random.default_rng(0), 3, 2)
        trace = iterate_map(_map("identity"), mu0, 5)
        assert all(measures_equal(mu, mu0) for mu in trace.measures)
        assert trace.fixed_point_residual == 0.0
        assert measures_equal(trace.candidate_fixed_point, mu0)

    def test_box_projection_lands_in_the_box(self):
        mu0 = new_discrete([[3.0, 0.0], [-2.0, 0.5]], [0.5, 0.5])
        trace = iterate_map(_map("box_projection"), mu0, 5)
        assert measures_equal(trace.measures[1], new_discrete([[1.0, 0.0], [-1.0, 0.5]], [0.5, 0.5]))
        assert trace.step_w2[1:] == [0.0] * 4

    def test_dimension_changing_map(self):
        with pytest.raises(SchemeError):
            iterate_map(lambda x: x[:, :1], dirac([1.0, 2.0]), 3)

    @pytest.mark.parametrize("lam", [0.0, 1.5])
    def test_relaxation_range(self, lam):
        with pytest.raises(SchemeError):
            iterate_map(_map("identity"), dirac(0.0), 3, lam=lam)
