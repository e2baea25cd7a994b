"""
Experiment configuration loading and validation.

One JSON document describes one experiment. The document names its kind
(distance, jko, evi, fixed_point, opial, sw_convergence), the measures it
starts from, the functional or map it exercises, scheme parameters and the
tolerances its verdict is judged against. Validation happens once, here;
the runner only sees configs that parsed.

Measure specs:
    {"type": "explicit", "points": [[...], ...], "weights": [...]}
    {"type": "seeded_random", "n_atoms": 3, "dim": 2, "seed": 7, "radius": 1.0}
    {"type": "grid", "dims": [3], "spacing": 0.5}
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from config.catalog import MAP_CATALOG
from config.settings import Config
from w2checks.convergence import SEQUENCE_CONSTRUCTIONS
from w2checks.functionals import FunctionalError, check_dimension, functional_from_dict
from w2checks.measure import MeasureError, grid_measure, new_discrete, random_measure

log = logging.getLogger(__name__)

KINDS = ('distance', 'jko', 'evi', 'fixed_point', 'opial', 'sw_convergence')

KIND_FIELDS = {
    'distance': ('mu', 'nu'),
    'jko': ('functional', 'mu0', 'tau', 'K'),
    'evi': ('functional', 'mu0', 't_grid'),
    'fixed_point': ('map', 'mu0', 'K'),
    'opial': ('limit', 'construction', 'length'),
    'sw_convergence': ('case',),
}

DEFAULT_TOLERANCES = {
    'distance': {'w2': 1e-9, 'duality_gap': Config.DUALITY_GAP_RTOL,
                 'dual_feasibility': Config.DUAL_FEASIBILITY_ATOL, 'slackness': Config.SLACKNESS_ATOL,
                 'cycle': Config.CYCLE_SUM_ATOL},
    'jko': {'monotone': Config.MONOTONE_ATOL, 'contraction': 1e-6, 'final': 1e-9,
            'resolvent_ratio': 0.02, 'resolvent_energy': 1e-3},
    'evi': {'evi': 1e-3, 'monotone': Config.MONOTONE_ATOL},
    'fixed_point': {'fixed_point': Config.FIXED_POINT_TOL, 'nonexpansive': Config.NONEXPANSIVE_ATOL,
                    'regularity': Config.ASYMPTOTIC_REGULARITY_TOL, 'monotone': Config.NONEXPANSIVE_ATOL,
                    'constant_step': 1e-9},
    'opial': {'opial': Config.OPIAL_ATOL, 'equality': 1e-3},
    'sw_convergence': {'convergence': Config.CONVERGENCE_TOL, 'moment_cap': Config.MOMENT_CAP},
}

MEASURE_FIELDS = ('mu', 'nu', 'mu0', 'limit')


class ConfigError(ValueError):
    """Raised when an experiment config is unreadable or violates its schema."""

    def __init__(self, message, path=None, field=None, line=None):
        self.path = path
        self.field = field
        self.line = line
        where = ", ".join(
            part for part in (
                path and f"file {path}",
                line and f"line {line}",
                field and f"field '{field}'",
            ) if part
        )
        super().__init__(f"{message} ({where})" if where else message)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    name: str
    kind: str
    path: str
    data: dict
    seed: int = None
    tolerance_scale: float = 1.0
    tolerances: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)
    functional: object = None

    def get(self, key, default=None):
        return self.data.get(key, default)

    def rng(self):
        return np.random.default_rng(self.seed)


def _line_of(text, key):
    """1-based line of the first occurrence of "key" in the raw document."""
    if text is None:
        return None
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def build_measure(spec, field_name, path=None, text=None):
    """Turn a measure spec dict into a DiscreteMeasure."""
    def fail(message, exc=None):
        raise ConfigError(message, path=path, field=field_name,
                          line=_line_of(text, field_name.split('.')[-1])) from exc

    if not isinstance(spec, dict):
        fail("measure spec must be an object")
    kind = spec.get('type', 'explicit' if 'points' in spec else None)
    try:
        if kind == 'explicit':
            return new_discrete(spec['points'], spec['weights'])
        if kind == 'seeded_random':
            if 'seed' not in spec:
                fail("seeded_random measure needs an explicit seed")
            rng = np.random.default_rng(int(spec['seed']))
            return random_measure(rng, int(spec['n_atoms']), int(spec['dim']),
                                  float(spec.get('radius', 1.0)))
        if kind == 'grid':
            return grid_measure(spec['dims'], float(spec.get('spacing', 1.0)))
    except ConfigError:
        raise
    except KeyError as exc:
        fail(f"measure spec is missing {exc}", exc)
    except (MeasureError, TypeError, ValueError) as exc:
        fail(f"invalid measure: {exc}", exc)
    fail(f"unknown measure type {kind!r}; use explicit, seeded_random or grid")


def _tolerances(kind, data, scale, path, text):
    given = data.get('tolerances') or {}
    if not isinstance(given, dict):
        raise ConfigError("tolerances must be an object", path=path, field='tolerances',
                          line=_line_of(text, 'tolerances'))
    merged = dict(DEFAULT_TOLERANCES[kind])
    if kind == 'jko':
        eulerian = data.get('mode', 'lagrangian') == 'eulerian'
        merged['epsilon'] = Config.EULERIAN_EPSILON if eulerian else Config.LAGRANGIAN_EPSILON
    for key, value in given.items():
        try:
            merged[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"tolerance {key!r} must be a number", path=path,
                              field=f'tolerances.{key}', line=_line_of(text, key)) from None
    return {key: value * scale for key, value in merged.items()}


def parse_config(data, path=None, text=None, tolerance_scale=1.0):
    """Validate a decoded config document and return an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", path=path)
    kind = data.get('kind')
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}",
                          path=path, field='kind', line=_line_of(text, 'kind'))
    for name in KIND_FIELDS[kind]:
        if name not in data:
            raise ConfigError(f"{kind} experiment requires '{name}'", path=path, field=name)
    if tolerance_scale <= 0:
        raise ConfigError(f"tolerance scale must be positive, got {tolerance_scale}", path=path)

    seed = data.get('seed')
    needs_seed = kind == 'opial' or 'random_probes' in data
    if needs_seed and seed is None:
        raise ConfigError(f"{kind} experiment draws random numbers and needs a 'seed'",
                          path=path, field='seed')
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a non-negative integer", path=path, field='seed',
                          line=_line_of(text, 'seed'))

    measures = {
        name: build_measure(data[name], name, path, text)
        for name in MEASURE_FIELDS if name in data
    }
    probes = {}
    for name, spec in (data.get('probes') or {}).items():
        probes[name] = build_measure(spec, f'probes.{name}', path, text)
    if 'random_probes' in data:
        spec = data['random_probes']
        rng = np.random.default_rng(seed)
        dim = int(spec.get('dim', next(iter(measures.values())).dim if measures else 1))
        for k in range(int(spec.get('count', 10))):
            probes[f"r{k}"] = random_measure(rng, int(spec.get('n_atoms', 3)), dim,
                                             float(spec.get('radius', 1.0)))

    functional = None
    if 'functional' in data:
        try:
            functional = functional_from_dict(data['functional'])
        except (FunctionalError, MeasureError) as exc:
            raise ConfigError(f"invalid functional: {exc}", path=path, field='functional',
                              line=_line_of(text, 'functional')) from exc
        for name, mu in list(measures.items()) + [(f'probes.{n}', p) for n, p in probes.items()]:
            try:
                check_dimension(functional, mu.dim)
            except MeasureError as exc:
                raise ConfigError(f"functional does not fit {name}: {exc}", path=path,
                                  field='functional', line=_line_of(text, 'functional')) from exc

    if kind == 'fixed_point':
        name = (data['map'] or {}).get('name') if isinstance(data['map'], dict) else None
        if name not in MAP_CATALOG:
            raise ConfigError(f"unknown map {name!r}; choose from {sorted(MAP_CATALOG)}",
                              path=path, field='map', line=_line_of(text, 'map'))
    if kind == 'opial' and data['construction'] not in SEQUENCE_CONSTRUCTIONS:
        raise ConfigError(f"unknown construction {data['construction']!r}", path=path,
                          field='construction', line=_line_of(text, 'construction'))
    if kind == 'jko' and data.get('mode', 'lagrangian') == 'eulerian' and 'grid' not in data:
        raise ConfigError("Eulerian JKO needs a 'grid' measure spec", path=path, field='grid')

    default_name = os.path.splitext(os.path.basename(path))[0] if path else kind
    return ExperimentConfig(
        name=str(data.get('name', default_name)),
        kind=kind,
        path=path,
        data=data,
        seed=seed,
        tolerance_scale=float(tolerance_scale),
        tolerances=_tolerances(kind, data, tolerance_scale, path, text),
        measures=measures,
        probes=probes,
        functional=functional,
    )


def load_config(path, tolerance_scale=1.0):
    """Read and validate one JSON config file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", path=path, line=exc.lineno) from exc
    config = parse_config(data, path=path, text=text, tolerance_scale=tolerance_scale)
    log.debug("loaded %s config %s from %s", config.kind, config.name, path)
    return config
