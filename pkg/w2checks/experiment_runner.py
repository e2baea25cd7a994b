"""Run one validated experiment config and write its artifacts.

Each kind maps to a small driver that calls into the engine modules,
turns every inequality it checks into a VerdictItem and collects a trace
table for the CSV. A VerdictItem passes when "residual <= tolerance"
agrees with what the config expects (it expects the inequality to hold
unless told otherwise).
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from config.catalog import MAP_CATALOG
from config.settings import Config
from w2checks.convergence import (
    SequenceError,
    build_sequence,
    check_sw_convergence,
    default_window,
    opial_terms,
    sw_canonical_case,
)
from w2checks.experiment_config import ConfigError, build_measure
from w2checks.functionals import FunctionalError, ProxError
from w2checks.measure import MeasureError, dirac
from w2checks.report_writer import write_run_artifacts
from w2checks.schemes import (
    FlowError,
    SchemeError,
    SolverParams,
    evi_flow,
    iterate_map,
    jko_run,
    resolvent_consistency,
    with_evi_residuals,
)
from w2checks.transport import TransportError, is_cyclically_monotone, solve_ot, w2

log = logging.getLogger(__name__)

# failures of the mathematics rather than of the config file
NUMERICAL_ERRORS = (
    MeasureError, FunctionalError, TransportError, ProxError, SchemeError, FlowError,
    SequenceError, ArithmeticError, np.linalg.LinAlgError,
)


@dataclass(frozen=True)
class VerdictItem:
    tag: str
    residual: float
    tolerance: float
    expect_holds: bool = True
    detail: str = ""
    diagnostic: bool = False

    @property
    def holds(self):
        return bool(self.residual <= self.tolerance)

    @property
    def passed(self):
        # diagnostics are reported, never failed
        return self.diagnostic or self.holds == self.expect_holds

    def to_dict(self):
        return {
            "tag": self.tag,
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "expect_holds": self.expect_holds,
            "passed": self.passed,
            "diagnostic": self.diagnostic,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Verdict:
    name: str
    kind: str
    items: list = field(default_factory=list)

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    @property
    def failed_tags(self):
        return [item.tag for item in self.items if not item.passed]

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "passed": self.passed,
            "items": [item.to_dict() for item in self.items],
        }


@dataclass(frozen=True)
class RunResult:
    verdict: Verdict
    paths: dict


def _max_increase(values):
    diffs = np.diff(np.asarray(values, dtype=float))
    return float(max(0.0, diffs.max())) if diffs.size else 0.0


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def _run_distance(cfg):
    tol = cfg.tolerances
    mu, nu = cfg.measures['mu'], cfg.measures['nu']
    solution = solve_ot(mu, nu)
    cycles = is_cyclically_monotone(solution.plan, max_cycle=int(cfg.get('max_cycle', 4)),
                                    atol=tol['cycle'])
    items = [
        VerdictItem("duality", solution.duality_gap / (1.0 + solution.squared_cost), tol['duality_gap']),
        VerdictItem("dual-feasibility", max(0.0, solution.dual_infeasibility()), tol['dual_feasibility']),
        VerdictItem("slackness", solution.slackness_violation(), tol['slackness']),
        VerdictItem("Eq.11", max(0.0, -cycles.worst_sum), tol['cycle'],
                    detail=f"cycles up to length {cycles.max_cycle}"),
    ]
    if 'expected_w2' in cfg.data:
        items.insert(0, VerdictItem("Eq.53", abs(solution.w2 - float(cfg.get('expected_w2'))), tol['w2'],
                                    detail=f"w2={solution.w2!r}"))
    columns = ["k", "w2", "squared_cost", "duality_gap"]
    rows = [{"k": 0, "w2": solution.w2, "squared_cost": solution.squared_cost,
             "duality_gap": solution.duality_gap}]
    return items, columns, rows


def _run_jko(cfg):
    tol = cfg.tolerances
    F = cfg.functional
    mu0 = cfg.measures['mu0']
    tau, K = float(cfg.get('tau')), int(cfg.get('K'))
    mode = cfg.get('mode', 'lagrangian')
    grid = build_measure(cfg.get('grid'), 'grid', cfg.path).points if 'grid' in cfg.data else None
    params = SolverParams(epsilon=tol['epsilon'], grid=grid)
    trace = jko_run(F, mu0, tau, K, mode, cfg.probes, params)
    eps = tol['epsilon']

    # the grid-restricted minimizer is not the W2 step, so Eq.60 and perconv
    # only measure grid resolution in Eulerian mode
    on_grid = mode == 'eulerian'
    suffix, note = ("-grid", "grid-resolution diagnostic") if on_grid else ("", "")
    items = [VerdictItem("Eq.6bis", max(trace.residual_6bis, default=0.0), eps)]
    if F.convexity.generalized_geodesic:
        items.append(VerdictItem("Eq.60" + suffix, max(trace.residual_eq60, default=0.0), eps,
                                 detail=note, diagnostic=on_grid))
        items.append(VerdictItem("energy-monotone", _max_increase(trace.energies), tol['monotone']))
    if cfg.probes:
        items.append(VerdictItem("perconvPPA" + suffix, max(trace.residual_perconv, default=0.0), eps,
                                 detail=note, diagnostic=on_grid))
    minimizer = cfg.get('minimizer')
    if minimizer:
        if minimizer not in trace.w2_to_probe:
            raise ConfigError(f"minimizer {minimizer!r} is not a probe name", path=cfg.path,
                              field='minimizer')
        items.append(VerdictItem("Eq.62", _max_increase(trace.w2_to_probe[minimizer]), tol['monotone'],
                                 detail=f"probe {minimizer}"))
    if 'contraction_center' in cfg.data:
        center = dirac(cfg.get('contraction_center'))
        bound = (1.0 + tau) ** (-K) * w2(mu0, center)
        items.append(VerdictItem("Thm.minimum", w2(trace.measures[-1], center) - bound,
                                 tol['contraction']))
    if 'expected_final' in cfg.data:
        expected = build_measure(cfg.get('expected_final'), 'expected_final', cfg.path)
        items.append(VerdictItem("final", w2(trace.measures[-1], expected), tol['final']))
    if 'resolvent_taus' in cfg.data:
        report = resolvent_consistency(F, mu0, cfg.get('resolvent_taus'), mode, params)
        monotone = max(_max_increase(report.distances), _max_increase([-e for e in report.energies]))
        items.append(VerdictItem("Eq.28-monotone", monotone, tol['monotone']))
        items.append(VerdictItem("Eq.28-distance", report.distance_ratio, tol['resolvent_ratio']))
        items.append(VerdictItem("Eq.28-energy", report.energy_gap, tol['resolvent_energy']))

    names = sorted(trace.w2_to_probe)
    columns = (["k", "t", "energy", "step_w2"] + [f"w2_to_probe_{n}" for n in names]
               + ["residual_eq60", "residual_6bis", "residual_perconv"])
    rows = []
    for k in range(K + 1):
        row = {"k": k, "t": k * tau, "energy": trace.energies[k]}
        for n in names:
            row[f"w2_to_probe_{n}"] = trace.w2_to_probe[n][k]
        if k > 0:
            row.update(step_w2=trace.step_w2[k - 1], residual_eq60=trace.residual_eq60[k - 1],
                       residual_6bis=trace.residual_6bis[k - 1],
                       residual_perconv=trace.residual_perconv[k - 1])
        rows.append(row)
    return items, columns, rows


def _time_grid(spec, path):
    if isinstance(spec, list):
        return [float(t) for t in spec]
    if isinstance(spec, dict) and 'stop' in spec and 'step' in spec:
        count = int(round(float(spec['stop']) / float(spec['step'])))
        return list(np.linspace(0.0, float(spec['stop']), count + 1))
    raise ConfigError("t_grid must be a list or {\"stop\": ..., \"step\": ...}", path=path, field='t_grid')


def _run_evi(cfg):
    tol = cfg.tolerances
    F = cfg.functional
    times = _time_grid(cfg.get('t_grid'), cfg.path)
    trace = evi_flow(F, cfg.measures['mu0'], times)
    n_interior = int(cfg.get('interior_points', 10))
    indices = sorted({int(round(x)) for x in np.linspace(1, len(times) - 2, n_interior)})
    trace = with_evi_residuals(trace, F, cfg.probes, indices)

    per_index = {}
    for entries in trace.evi_residuals.values():
        for k, value in entries:
            per_index[k] = max(per_index.get(k, -math.inf), value)
    items = [VerdictItem("energy-monotone", _max_increase(trace.energies), tol['monotone'])]
    if per_index:
        items.insert(0, VerdictItem("EVI", max(per_index.values()), tol['evi'],
                                    detail=f"{len(cfg.probes)} probes x {len(indices)} times"))
    columns = ["k", "t", "energy", "evi_residual"]
    rows = [{"k": k, "t": t, "energy": trace.energies[k], "evi_residual": per_index.get(k)}
            for k, t in enumerate(trace.times)]
    return items, columns, rows


def _run_fixed_point(cfg):
    tol = cfg.tolerances
    spec = cfg.get('map')
    entry = MAP_CATALOG[spec['name']]
    params = spec.get('params') or {}
    try:
        T = entry['build'](params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid map parameters: {exc}", path=cfg.path, field='map') from exc
    mu0 = cfg.measures['mu0']
    candidates = dict(cfg.probes)
    if not candidates:
        candidates['fixed_point'] = dirac(entry['fixed_point'](params, mu0.dim))
    names = sorted(candidates)
    K = int(cfg.get('K'))
    trace = iterate_map(T, mu0, K, lam=float(cfg.get('lambda', 1.0)),
                        candidates=[candidates[n] for n in names], seed=cfg.seed or 0,
                        regularity_tol=tol['regularity'], fixed_point_tol=tol['fixed_point'],
                        atol=tol['nonexpansive'])

    expect_regular = bool(cfg.get('expect_regular', True))
    quarter = trace.step_w2[-max(1, K // 4):]
    items = [
        VerdictItem("nonexpansive", trace.nonexpansive_worst, tol['nonexpansive']),
        VerdictItem("asymptotic-regularity", max(quarter), tol['regularity'], expect_holds=expect_regular),
    ]
    if expect_regular:
        items.append(VerdictItem("fixed-point", trace.fixed_point_residual, tol['fixed_point']))
        for n, distances in zip(names, trace.candidate_distances):
            items.append(VerdictItem("Eq.18", _max_increase(distances), tol['monotone'], detail=f"candidate {n}"))
    else:
        items.append(VerdictItem("step-constant", max(trace.step_w2) - min(trace.step_w2),
                                 tol['constant_step']))

    columns = ["k", "step_w2"] + [f"w2_to_probe_{n}" for n in names]
    rows = []
    for k in range(K + 1):
        row = {"k": k, "step_w2": trace.step_w2[k] if k < K else None}
        for n, distances in zip(names, trace.candidate_distances):
            row[f"w2_to_probe_{n}"] = distances[k]
        rows.append(row)
    return items, columns, rows


def _run_opial(cfg):
    tol = cfg.tolerances
    limit = cfg.measures['limit']
    length = int(cfg.get('length'))
    seq = build_sequence(cfg.get('construction'), limit, length, cfg.rng(),
                         rate=float(cfg.get('rate', 0.5)))
    window = int(cfg.get('window', default_window(length)))
    probes = dict(cfg.probes) or {"limit": limit}
    names = sorted(probes)
    terms = {n: opial_terms(seq, limit, probes[n], window) for n in names}
    residuals = [terms[n].residual for n in names]
    items = [VerdictItem("Eq.33", -min(residuals), tol['opial'],
                         detail=f"min residual {min(residuals)!r} over {len(names)} probes")]
    if cfg.get('expect_equality'):
        items.append(VerdictItem("Eq.33-equality", max(abs(r) for r in residuals), tol['equality']))

    first = terms[names[0]]
    columns = ["k", "w2_to_limit"] + [f"w2_to_probe_{n}" for n in names]
    rows = []
    for k in range(length):
        row = {"k": k + 1, "w2_to_limit": math.sqrt(max(first.to_limit[k], 0.0))}
        for n in names:
            row[f"w2_to_probe_{n}"] = math.sqrt(max(terms[n].to_probe[k], 0.0))
        rows.append(row)
    return items, columns, rows


def _run_sw_convergence(cfg):
    tol = cfg.tolerances
    case = sw_canonical_case(cfg.get('case'), length=int(cfg.get('length', 40)))
    window = cfg.get('window')
    report = check_sw_convergence(
        case.sequence, case.limit, int(cfg.get('x_dim', case.x_dim)),
        p=float(cfg.get('p', case.p)), q=float(cfg.get('q', case.q)),
        window=int(window) if window else None,
        tolerance=tol['convergence'], moment_cap=tol['moment_cap'],
    )
    expected = bool(cfg.get('expected_verdict', True))
    items = [VerdictItem("Prop.sw", 0.0 if report.verdict else 1.0, 0.5, expect_holds=expected,
                         detail=f"verdict={report.verdict}")]
    expect = cfg.get('expect') or ({'i': True, 'ii': True, 'iii': True} if expected else {})
    components = {
        'i': ("Prop.sw.i", report.narrow_tail, tol['convergence']),
        'ii': ("Prop.sw.ii", report.moment_p_tail, tol['convergence']),
        'iii': ("Prop.sw.iii", report.moment_q_sup, tol['moment_cap']),
    }
    for key, (tag, residual, tolerance) in components.items():
        if key in expect:
            items.append(VerdictItem(tag, residual, tolerance, expect_holds=bool(expect[key])))

    columns = ["k", "narrow_discrepancy", "moment_p_gap", "moment_q"]
    rows = [
        {"k": k + 1, "narrow_discrepancy": d, "moment_p_gap": g, "moment_q": m}
        for k, (d, g, m) in enumerate(zip(report.narrow_discrepancy, report.moment_p_gaps,
                                          report.moment_q_values))
    ]
    return items, columns, rows


DRIVERS = {
    'distance': _run_distance,
    'jko': _run_jko,
    'evi': _run_evi,
    'fixed_point': _run_fixed_point,
    'opial': _run_opial,
    'sw_convergence': _run_sw_convergence,
}


def run(config, out_dir=None):
    """Run one experiment, write trace/manifest/verdict files, return the result."""
    out_dir = out_dir or Config.OUTPUT_DIR
    log.info("Running %s experiment %s", config.kind, config.name)
    items, columns, rows = DRIVERS[config.kind](config)
    verdict = Verdict(config.name, config.kind, items)

    manifest = {
        "name": config.name,
        "kind": config.kind,
        "seed": config.seed,
        "prng": Config.PRNG_NAME,
        "tolerance_scale": config.tolerance_scale,
        "tolerances": config.tolerances,
        "config": config.data,
        "artifacts": [f"{config.name}_trace.csv", f"{config.name}_manifest.json",
                      f"{config.name}_verdict.json"],
    }
    paths = write_run_artifacts(os.fspath(out_dir), config.name, columns, rows, manifest,
                                verdict.to_dict())
    for item in items:
        if item.diagnostic and not item.holds:
            log.info("%s: %s %.3e above %.1e (diagnostic only)", config.name, item.tag,
                     item.residual, item.tolerance)
        elif not item.passed:
            log.warning("%s: %s residual %.3e against tolerance %.1e", config.name, item.tag,
                        item.residual, item.tolerance)
    log.info("%s: %s", config.name, "PASS" if verdict.passed else "FAIL")
    return RunResult(verdict, paths)
