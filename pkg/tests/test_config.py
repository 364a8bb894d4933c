"""Tests for strict config parsing, normalization, and hashing."""

import pytest

from frsde.config import (
    ConfigError,
    load_config,
    parse_config,
    to_toml,
    with_overrides,
)
from frsde.model import Q_RANGE_MESSAGE


def minimal(kind="eig", experiment="", extra=""):
    return f"""
kind = "{kind}"
master_seed = 7

[space]
N = 15
s = 0.5
{extra}
[experiment]
{experiment}
"""


class TestParsing:
    def test_minimal_config_fills_defaults(self):
        cfg = parse_config(minimal())
        assert cfg.kind == "eig"
        assert cfg.space.p == 4.0
        assert cfg.space_mode == "SpectralPower"
        assert cfg.drift_f.delta1 == 1.0
        assert cfg.drift_h.family == "BoundedSine"
        assert cfg.noise.m == 6 and cfg.noise.q == 3.0
        assert cfg.scheme.scheme == "ExponentialTamed"
        assert cfg.scheme.master_seed == 7
        assert cfg.output_dir == "out"

    def test_all_problems_reported_at_once(self):
        text = """
kind = "bogus"
mystery = 1

[space]
N = 15
s = 1.5

[experiment]
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        joined = str(err.value)
        assert "kind must be one of" in joined
        assert "unknown key 'mystery'" in joined
        assert "[space]" in joined
        assert len(err.value.problems) >= 3

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key 'sigma'"):
            parse_config(minimal(extra="\n[drift_h]\nkappa = 0.5\n"
                                       "phi3 = 0.5\nsigma = 1.0\n"))

    def test_q_at_least_p_rejected_with_constraint_text(self):
        text = minimal(extra="""
[noise]
m = 2
q = 4.0
sigma1_coeffs = [0.1, 0.1]
beta = [0.0, 0.0]
gamma = [0.1, 0.1]
""")
        with pytest.raises(ConfigError, match="q must satisfy 2 <= q < p"):
            parse_config(text)
        assert "2 <= q < p" in Q_RANGE_MESSAGE

    def test_growth_exponent_must_match_space(self):
        text = minimal(extra="""
[drift_f]
p = 5.0
delta1 = 1.0
delta2 = 1.0
""")
        with pytest.raises(ConfigError, match="must match"):
            parse_config(text)

    def test_wrong_types_named(self):
        with pytest.raises(ConfigError, match="'N' must be a int"):
            parse_config(minimal().replace("N = 15", 'N = "many"'))
        with pytest.raises(ConfigError, match="'s' must be a float"):
            parse_config(minimal().replace("s = 0.5", 's = "half"'))

    def test_invalid_toml_reported(self):
        with pytest.raises(ConfigError, match="not valid TOML"):
            parse_config("kind = ")

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigError, match="nonnegative"):
            parse_config(minimal().replace("master_seed = 7",
                                           "master_seed = -1"))

    def test_missing_tables_reported(self):
        with pytest.raises(ConfigError) as err:
            parse_config('kind = "simulate"\n')
        assert any("[space]" in p for p in err.value.problems)
        assert any("[experiment]" in p for p in err.value.problems)

    def test_all_default_kinds_need_no_experiment_table(self):
        # check and eig take only defaulted keys
        for kind in ("check", "eig"):
            cfg = parse_config(f'kind = "{kind}"\n'
                               "[space]\nN = 15\ns = 0.5\np = 4.0\n")
            assert cfg.experiment is not None


class TestExperimentSection:
    def test_level_beyond_operator_dimension(self):
        text = minimal(kind="moments",
                       experiment="levels = [4, 8, 64]\nn_paths = 8\n")
        with pytest.raises(ConfigError, match="level 64 outside"):
            parse_config(text)

    def test_h_mode_bounded_by_n_modes(self):
        text = minimal(kind="aldous", experiment="""
n_modes = 4
h_mode = 9
delta_grid = [0.125]
theta_grid = [0.0]
n_paths = 8
""")
        with pytest.raises(ConfigError, match="h_mode exceeds"):
            parse_config(text)

    def test_single_path_rejected(self):
        text = minimal(kind="converge",
                       experiment="levels = [4, 8]\nn_paths = 1\n")
        with pytest.raises(ConfigError, match="at least 2"):
            parse_config(text)

    def test_empty_grid_rejected(self):
        text = minimal(kind="aldous", experiment="""
n_modes = 4
delta_grid = []
theta_grid = [0.0]
n_paths = 8
""")
        with pytest.raises(ConfigError, match="delta_grid must be nonempty"):
            parse_config(text)

    def test_bad_profile_rejected(self):
        text = minimal(kind="simulate", experiment="""
n_modes = 4
initial_profile = "bump"
""")
        with pytest.raises(ConfigError, match="initial_profile"):
            parse_config(text)

    def test_converge_needs_two_levels(self):
        text = minimal(kind="converge",
                       experiment="levels = [8]\nn_paths = 8\n")
        with pytest.raises(ConfigError, match="two levels"):
            parse_config(text)


class TestNormalization:
    def test_round_trip_hash_stable(self):
        cfg = parse_config(minimal())
        again = parse_config(to_toml(cfg))
        assert again.config_hash() == cfg.config_hash()
        assert again.raw == cfg.raw

    def test_integer_literals_normalize_to_floats(self):
        a = parse_config(minimal(extra="\n[scheme]\ndt = 0.01\nT = 1\n"))
        b = parse_config(minimal(extra="\n[scheme]\ndt = 0.01\nT = 1.0\n"))
        assert a.config_hash() == b.config_hash()

    def test_distinct_configs_hash_differently(self):
        a = parse_config(minimal())
        b = parse_config(minimal().replace("s = 0.5", "s = 0.6"))
        assert a.config_hash() != b.config_hash()

    def test_overrides_update_hash_and_scheme(self):
        cfg = parse_config(minimal())
        bumped = with_overrides(cfg, seed=99, output_dir="elsewhere")
        assert bumped.master_seed == 99
        assert bumped.scheme.master_seed == 99
        assert bumped.output_dir == "elsewhere"
        assert bumped.raw["master_seed"] == 99
        assert bumped.config_hash() != cfg.config_hash()
        assert with_overrides(cfg) is cfg

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(minimal())
        cfg = load_config(path)
        assert cfg.kind == "eig"
