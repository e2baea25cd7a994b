"""Tests for w2checks.experiment_config"""

import glob
import json
import os

import pytest

from config.settings import Config
from w2checks.experiment_config import (
    DEFAULT_TOLERANCES,
    ConfigError,
    build_measure,
    load_config,
    parse_config,
)
from w2checks.measure import measures_equal


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload, indent=2))
    return str(path)


DISTANCE = {
    "kind": "distance",
    "mu": {"type": "explicit", "points": [[0.0, 0.0]], "weights": [1.0]},
    "nu": {"type": "explicit", "points": [[3.0, 4.0]], "weights": [1.0]},
}


class TestAcceptanceConfigs:

    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(Config.ACCEPTANCE_DIR, "*.json"))))
    def test_every_shipped_config_parses(self, path):
        config = load_config(path)
        assert config.name == os.path.splitext(os.path.basename(path))[0]

    def test_acceptance_directory_is_populated(self):
        assert len(glob.glob(os.path.join(Config.ACCEPTANCE_DIR, "*.json"))) >= 10


class TestMeasureSpecs:

    def test_explicit(self):
        mu = build_measure({"type": "explicit", "points": [[1.0]], "weights": [1.0]}, "mu")
        assert mu.dim == 1 and mu.size == 1

    def test_type_defaults_to_explicit(self):
        assert build_measure({"points": [[1.0]], "weights": [1.0]}, "mu").size == 1

    def test_seeded_random_is_reproducible(self):
        spec = {"type": "seeded_random", "n_atoms": 3, "dim": 2, "seed": 7}
        assert measures_equal(build_measure(spec, "mu"), build_measure(spec, "mu"), atol=0.0)

    def test_seeded_random_needs_seed(self):
        with pytest.raises(ConfigError) as exc:
            build_measure({"type": "seeded_random", "n_atoms": 3, "dim": 2}, "mu0")
        assert exc.value.field == "mu0"
        assert "seed" in str(exc.value)

    def test_grid(self):
        mu = build_measure({"type": "grid", "dims": [3, 3], "spacing": 0.5}, "grid")
        assert mu.size == 9

    def test_invalid_weights(self):
        with pytest.raises(ConfigError, match="invalid measure"):
            build_measure({"points": [[0.0], [1.0]], "weights": [0.5, 0.4]}, "mu")

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            build_measure({"type": "gaussian"}, "mu")


class TestParseConfig:

    def test_distance_defaults(self):
        config = parse_config(DISTANCE)
        assert config.kind == "distance" and config.name == "distance"
        assert config.tolerances == DEFAULT_TOLERANCES["distance"]

    def test_tolerance_scale_multiplies_everything(self):
        config = parse_config(dict(DISTANCE, tolerances={"w2": 1e-6}), tolerance_scale=10.0)
        assert config.tolerances["w2"] == pytest.approx(1e-5)
        assert config.tolerances["cycle"] == pytest.approx(10.0 * Config.CYCLE_SUM_ATOL)

    def test_jko_epsilon_follows_mode(self):
        base = {
            "kind": "jko", "tau": 1.0, "K": 2,
            "functional": {"kind": "potential", "name": "quadratic"},
            "mu0": {"points": [[0.0]], "weights": [1.0]},
        }
        assert parse_config(base).tolerances["epsilon"] == Config.LAGRANGIAN_EPSILON
        eulerian = dict(base, mode="eulerian", grid={"type": "grid", "dims": [3]})
        assert parse_config(eulerian).tolerances["epsilon"] == Config.EULERIAN_EPSILON

    def test_eulerian_needs_grid(self):
        data = {
            "kind": "jko", "tau": 1.0, "K": 2, "mode": "eulerian",
            "functional": {"kind": "potential", "name": "quadratic"},
            "mu0": {"points": [[0.0]], "weights": [1.0]},
        }
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == "grid"

    def test_unknown_kind(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"kind": "transport"})
        assert exc.value.field == "kind"

    def test_missing_required_field(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"kind": "distance", "mu": DISTANCE["mu"]})
        assert exc.value.field == "nu"

    def test_opial_needs_seed(self):
        data = {"kind": "opial", "limit": {"points": [[0.0]], "weights": [1.0]},
                "construction": "dirac_drift", "length": 10}
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == "seed"

    def test_unknown_construction(self):
        data = {"kind": "opial", "seed": 1, "limit": {"points": [[0.0]], "weights": [1.0]},
                "construction": "spiral", "length": 10}
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == "construction"

    def test_unknown_map(self):
        data = {"kind": "fixed_point", "map": {"name": "shear"}, "K": 3,
                "mu0": {"points": [[0.0]], "weights": [1.0]}}
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == "map"

    def test_invalid_functional(self):
        data = {"kind": "evi", "t_grid": [0.0, 1.0],
                "functional": {"kind": "potential", "name": "linear"},
                "mu0": {"points": [[0.0]], "weights": [1.0]}}
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.field == "functional"

    def test_functional_dimension_must_fit_the_measures(self):
        data = {"kind": "jko", "tau": 1.0, "K": 2,
                "functional": {"kind": "potential", "name": "quadratic", "params": {"a": [1.0, 2.0]}},
                "mu0": {"points": [[3.0]], "weights": [1.0]}}
        with pytest.raises(ConfigError, match="mu0") as exc:
            parse_config(data)
        assert exc.value.field == "functional"

    def test_extra_measure_dimension_must_fit_the_functional(self):
        data = {"kind": "jko", "tau": 1.0, "K": 2,
                "functional": {"kind": "potential", "name": "quadratic", "params": {"a": [1.0, 2.0]}},
                "mu0": {"points": [[3.0, 0.0]], "weights": [1.0]},
                "probes": {"flat": {"points": [[0.0, 0.0, 0.0]], "weights": [1.0]}}}
        with pytest.raises(ConfigError, match="probes.flat"):
            parse_config(data)

    def test_random_probes_use_the_seed(self):
        data = dict(DISTANCE, seed=3, random_probes={"count": 4, "n_atoms": 2})
        a, b = parse_config(data), parse_config(data)
        assert sorted(a.probes) == ["r0", "r1", "r2", "r3"]
        assert all(measures_equal(a.probes[k], b.probes[k], atol=0.0) for k in a.probes)
        assert a.probes["r0"].dim == 2

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            parse_config(dict(DISTANCE, seed=-1))

    def test_non_numeric_tolerance(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(dict(DISTANCE, tolerances={"w2": "tight"}))
        assert exc.value.field == "tolerances.w2"


class TestLoadConfig:

    def test_malformed_json_reports_line(self, tmp_path):
        path = _write(tmp_path, "broken.json", '{\n  "kind": "distance",\n  "mu": [,\n}\n')
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.line == 3
        assert "broken.json" in str(exc.value)

    def test_field_errors_carry_the_line(self, tmp_path):
        payload = json.dumps(dict(DISTANCE, seed="seven"), indent=2)
        path = _write(tmp_path, "bad_seed.json", payload)
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.field == "seed"
        assert exc.value.line == payload.splitlines().index('  "seed": "seven"') + 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.json"))

    def test_name_defaults_to_file_stem(self, tmp_path):
        path = _write(tmp_path, "dirac_pair.json", DISTANCE)
        assert load_config(path).name == "dirac_pair"
