"""Tests for interface.config."""

from pathlib import Path
import tempfile

import pytest

from common.constants import ConfigError, ModelKind, UsageError
from common.tester import run_tests_for_function, test_module
from interface.config import _parse_line, _to_strikes, load_config, parse_config
from pricing.vol_models import HestonParams, SabrParams

BASE = """\
# Heston test experiment
[model]
type = heston
sigma0 = 20
kappa = 2
theta = 400
nu = 20

[market]
x0 = 100
maturities = 0.8, 1.0   ; two maturities
strikes = 90:110:5

[sim]
n_paths = 1_000
seed = 7
"""


def _with(extra: str) -> str:
    return BASE + extra


def _error_message(text: str) -> str:
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return str(info.value)


def test_parse_minimal_file_with_defaults():
    config = parse_config(BASE)
    assert config.model == HestonParams(20.0, 2.0, 400.0, 20.0)
    assert config.maturities == (0.8, 1.0)
    assert config.strikes == (90.0, 95.0, 100.0, 105.0, 110.0)
    assert (config.n_paths, config.seed, config.steps_per_year, config.antithetic) == (1_000, 7, 252, True)
    assert (config.n_terms, config.n_max, config.n_star_tol) == (30, 40, 0.01)
    assert config.directory == Path("out")
    assert config.sim_config().n_paths == 1_000
    assert config.market(0.8, 95.0).k == 95.0


def test_sabr_file():
    text = BASE.replace("type = heston", "type = SABR").replace("kappa = 2\n", "").replace("theta = 400\n", "")
    config = parse_config(text)
    assert config.model == SabrParams(20.0, 20.0)
    assert config.model.kind is ModelKind.SABR


def test_strike_grids():
    assert run_tests_for_function(
        [("70:140:35",), ("1:3:0.1",), ("90, 100,110",), ("1:2:0.3",), ("5:1:1",), ("1:2",), ("",)],
        [(70.0, 105.0, 140.0), tuple(round(1 + 0.1 * i, 12) for i in range(21)), (90.0, 100.0, 110.0),
         "error", "error", "error", "error"],
        _to_strikes,
        "inclusive grids and lists",
    )
    assert _to_strikes("1:3:0.1")[10] == 2.0


def _scanned(raw, line_number):
    line = _parse_line(raw, line_number)
    if line is None:
        return None
    return line.section or (line.key, line.value)


def test_line_scanner():
    assert run_tests_for_function(
        [("   ; just a comment", 1), ("[Sim]", 2), ("Seed = 3  # trailing", 3), ("seed 3", 4), ("[]", 5)],
        [None, "sim", ("seed", "3"), "error", "error"],
        _scanned,
        "headers, pairs and comments",
    )


def test_errors_name_the_line():
    assert "Line 16" in _error_message(BASE.replace("seed = 7", "seed = seven"))
    assert "Line 18" in _error_message(_with("\ncolour = blue\n"))
    assert "unknown section" in _error_message(_with("[plots]\n"))
    assert "set twice" in _error_message(_with("seed = 8\n"))
    assert "appears twice" in _error_message(_with("[model]\n"))
    assert "before any section" in _error_message("seed = 3\n" + BASE)
    assert "expected 'key = value'" in _error_message(_with("just words\n"))


def test_missing_and_invalid_values():
    assert "Missing required key 'seed'" in _error_message(BASE.replace("seed = 7\n", ""))
    assert "kappa and theta" in _error_message(BASE.replace("kappa = 2\n", ""))
    assert "not a SABR parameter" in _error_message(BASE.replace("type = heston", "type = sabr"))
    assert "[model]" in _error_message(BASE.replace("nu = 20", "nu = -1"))
    assert "[sim]" in _error_message(BASE.replace("n_paths = 1_000", "n_paths = 999"))
    assert "n_max" in _error_message(_with("[series]\nn_terms = 45\n"))
    assert "format_version" in _error_message(_with("[output]\nformat_version = 2\n"))
    assert "invalid value" in _error_message(BASE.replace("type = heston", "type = bergomi"))
    assert issubclass(ConfigError, UsageError)


def test_overrides():
    config = parse_config(BASE)
    changed = config.with_overrides(seed=9, n_paths=2_000, n_terms=50, directory="elsewhere", workers=4)
    assert (changed.seed, changed.n_paths, changed.n_terms, changed.n_max) == (9, 2_000, 50, 51)
    assert changed.directory == Path("elsewhere") and changed.workers == 4
    assert config.with_overrides() is config
    assert config.with_overrides(n_terms=5).n_max == 40
    with pytest.raises(ConfigError):
        config.with_overrides(n_paths=3)


def test_config_hash():
    config = parse_config(BASE)
    # comments, spacing and key order do not change the content
    reordered = BASE.replace("seed = 7\n", "").replace("[sim]\n", "[sim]\nseed   =  7   ; again\n")
    assert parse_config(reordered).config_hash == config.config_hash
    assert config.with_overrides(directory="x", workers=3).config_hash == config.config_hash
    assert config.with_overrides(seed=8).config_hash != config.config_hash
    assert len(config.config_hash) == 64


def test_load_config():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "experiment.cfg"
        path.write_text(BASE, encoding="utf-8")
        assert load_config(path) == parse_config(BASE)
        with pytest.raises(ConfigError):
            load_config(Path(tmp) / "missing.cfg")


def test_shipped_configs_parse():
    configs = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.cfg"))
    assert configs
    for path in configs:
        config = load_config(path)
        assert config.n_paths > 0 and config.strikes, path.name


if __name__ == "__main__":
    test_module(
        "config",
        [
            test_parse_minimal_file_with_defaults,
            test_sabr_file,
            test_strike_grids,
            test_line_scanner,
            test_errors_name_the_line,
            test_missing_and_invalid_values,
            test_overrides,
            test_config_hash,
            test_load_config,
            test_shipped_configs_parse,
        ],
    )
