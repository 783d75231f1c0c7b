"""Experiment configuration files: parsing, validation and hashing.

Responsibility:
- Read a plain-text experiment file made of ``[section]`` headers and
  ``key = value`` lines into an immutable :class:`ExperimentConfig`.
- Reject anything unexpected: unknown sections or keys, duplicated keys,
  missing required keys, values of the wrong type, model parameters outside
  their domain. Every message names the offending line.
- Fingerprint the parsed configuration so reports can be traced to their inputs.

Example file::

    [model]
    type = heston
    sigma0 = 20
    kappa = 2
    theta = 400
    nu = 20

    [market]
    x0 = 100
    maturities = 0.8, 1.0, 1.2
    strikes = 70:140:2        ; inclusive grid, or a comma list

    [sim]
    n_paths = 100000
    seed = 42

Entry points / public API:
- :func:`load_config`, :func:`parse_config`
- :class:`ExperimentConfig` (with :meth:`ExperimentConfig.with_overrides`)

Includes:
- :class:`ConfigLine`, the record produced for each meaningful line, and the
  private scanner :func:`_parse_line`.
- Value converters :func:`_to_float`, :func:`_to_int`, :func:`_to_bool`,
  :func:`_to_float_list`, :func:`_to_strikes`.
"""

from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path
import logging
import math

from common.constants import (
    DEFAULT_FD_STEP,
    DEFAULT_N_MAX,
    DEFAULT_N_STAR_TOL,
    DEFAULT_N_TERMS,
    DEFAULT_STEPS_PER_YEAR,
    MOMENT_TABLE_FORMAT_VERSION,
    ConfigError,
    DomainError,
    ModelKind,
    SimulationError,
)
from common.utils import content_hash, formatted_value, parse_value
from pricing.bachelier import MarketSpec
from pricing.vol_models import VolModel, model_from_description
from simulator.paths import SimConfig

logger = logging.getLogger(__name__)


### Notes on Python features used in this module ###
#
# Lambdas and callables as values (the _SCHEMA table below):
# Each key maps to the function that converts its text. Storing functions in a
# dictionary keeps the validation rules in one table instead of a long chain
# of if/elif branches, and adding a key means adding one row.
#
# dataclasses.replace (used by ExperimentConfig.with_overrides):
# Frozen dataclasses cannot be modified, so an override builds a new object
# that copies every field except the ones named.


@dataclass(frozen=True)
class ConfigLine:
    """One meaningful line of a configuration file."""

    line_number: int
    text: str
    section: str | None = None  # set for a "[section]" header
    key: str | None = None  # set for a "key = value" line
    value: str | None = None


def _parse_line(raw: str, line_number: int) -> ConfigLine | None:
    """Scan one raw line; None for blank and comment-only lines.

    Raises:
        ConfigError: If the line is neither a section header nor a key/value pair.
    """
    # ";" and "#" both start a comment, anywhere on the line
    text = raw.split(";", 1)[0].split("#", 1)[0].strip()
    if not text:
        return None
    if text.startswith("["):
        if not text.endswith("]") or len(text) < 3:
            raise ConfigError(f"Line {line_number}: malformed section header '{raw.strip()}'.")
        return ConfigLine(line_number, text, section=text[1:-1].strip().lower())
    key, sep, value = text.partition("=")
    key, value = key.strip().lower(), value.strip()
    if not sep or not key or not value:
        raise ConfigError(
            f"""Line {line_number}: expected 'key = value', got '{raw.strip()}'.
correct formats:
- [<section>]
- <key> = <value>"""
        )
    return ConfigLine(line_number, text, key=key, value=value)


def _to_float(text: str) -> float:
    value = parse_value(text)
    if not math.isfinite(value):
        raise ValueError(f"'{text}' is not a finite number")
    return value


def _to_int(text: str) -> int:
    return int(text.replace("_", ""))


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _to_float_list(text: str) -> tuple[float, ...]:
    values = tuple(_to_float(part) for part in text.split(",") if part.strip())
    if not values:
        raise ValueError("empty list")
    return values


def _to_strikes(text: str) -> tuple[float, ...]:
    """Parse ``lo:hi:step`` (inclusive) or a comma list."""
    if ":" not in text:
        return _to_float_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"strike grid '{text}' must read lo:hi:step")
    lo, hi, step = (_to_float(part) for part in parts)
    if step <= 0.0 or hi < lo:
        raise ValueError(f"strike grid '{text}' needs step > 0 and hi >= lo")
    count = (hi - lo) / step
    n = round(count)
    if abs(count - n) > 1e-9 * max(1.0, count):
        raise ValueError(f"step {step} does not divide [{lo}, {hi}]")
    # rounding removes the float noise of lo + i * step
    return tuple(round(lo + i * step, 12) for i in range(n + 1))


_REQUIRED = object()

# section -> key -> (converter, default)
_SCHEMA: dict[str, dict[str, tuple[Callable[[str], object], object]]] = {
    "model": {
        "type": (lambda text: ModelKind(text.lower()), _REQUIRED),
        "sigma0": (_to_float, _REQUIRED),
        "kappa": (_to_float, None),
        "theta": (_to_float, None),
        "nu": (_to_float, _REQUIRED),
        "rho": (_to_float, 0.0),
    },
    "market": {
        "x0": (_to_float, _REQUIRED),
        "maturities": (_to_float_list, _REQUIRED),
        "strikes": (_to_strikes, _REQUIRED),
    },
    "sim": {
        "n_paths": (_to_int, _REQUIRED),
        "steps_per_year": (_to_int, DEFAULT_STEPS_PER_YEAR),
        "seed": (_to_int, _REQUIRED),
        "antithetic": (_to_bool, True),
        "workers": (_to_int, 1),
    },
    "series": {
        "n_terms": (_to_int, DEFAULT_N_TERMS),
        "n_star_tol": (_to_float, DEFAULT_N_STAR_TOL),
        "n_max": (_to_int, DEFAULT_N_MAX),
    },
    "greeks": {"fd_step": (_to_float, DEFAULT_FD_STEP)},
    "cv": {"out_of_sample": (_to_bool, False)},
    "output": {
        "directory": (str, "out"),
        "format_version": (_to_int, MOMENT_TABLE_FORMAT_VERSION),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one normvol command needs, already validated."""

    model: VolModel
    x0: float
    maturities: tuple[float, ...]
    strikes: tuple[float, ...]
    n_paths: int
    seed: int
    steps_per_year: int = DEFAULT_STEPS_PER_YEAR
    antithetic: bool = True
    workers: int = 1
    n_terms: int = DEFAULT_N_TERMS
    n_star_tol: float = DEFAULT_N_STAR_TOL
    n_max: int = DEFAULT_N_MAX
    fd_step: float = DEFAULT_FD_STEP
    cv_out_of_sample: bool = False
    directory: Path = Path("out")
    format_version: int = MOMENT_TABLE_FORMAT_VERSION
    config_hash: str = field(init=False, default="")

    def __post_init__(self) -> None:
        if not self.maturities or any(T <= 0.0 for T in self.maturities):
            raise ConfigError("[market] maturities must be a non-empty list of positive numbers.")
        if not self.strikes:
            raise ConfigError("[market] strikes must not be empty.")
        if self.n_terms < 0:
            raise ConfigError(f"[series] n_terms must be >= 0, got {self.n_terms}.")
        if self.n_max < max(1, self.n_terms + 1):
            raise ConfigError(f"[series] n_max ({self.n_max}) must exceed n_terms ({self.n_terms}).")
        if self.n_star_tol <= 0.0:
            raise ConfigError(f"[series] n_star_tol must be positive, got {self.n_star_tol}.")
        if self.fd_step <= 0.0:
            raise ConfigError(f"[greeks] fd_step must be positive, got {self.fd_step}.")
        if self.format_version != MOMENT_TABLE_FORMAT_VERSION:
            raise ConfigError(f"[output] format_version {self.format_version} is not supported.")
        try:
            self.sim_config()
        except SimulationError as e:
            raise ConfigError(f"[sim] {e}") from e
        object.__setattr__(self, "config_hash", content_hash(self.describe()))

    def describe(self) -> dict[str, object]:
        """Canonical content; output directory and worker count are excluded."""
        fields = {f"model.{key}": value for key, value in self.model.describe().items()}
        fields.update(
            {
                "market.x0": self.x0,
                "market.maturities": ",".join(formatted_value(T) for T in self.maturities),
                "market.strikes": ",".join(formatted_value(k) for k in self.strikes),
                "sim.n_paths": self.n_paths,
                "sim.steps_per_year": self.steps_per_year,
                "sim.seed": self.seed,
                "sim.antithetic": self.antithetic,
                "series.n_terms": self.n_terms,
                "series.n_star_tol": self.n_star_tol,
                "series.n_max": self.n_max,
                "greeks.fd_step": self.fd_step,
                "cv.out_of_sample": self.cv_out_of_sample,
                "output.format_version": self.format_version,
            }
        )
        return fields

    def sim_config(self, keep_grid: bool = False) -> SimConfig:
        return SimConfig(
            n_paths=self.n_paths,
            steps_per_year=self.steps_per_year,
            seed=self.seed,
            antithetic=self.antithetic,
            keep_grid=keep_grid,
            workers=self.workers,
        )

    def market(self, T: float, k: float) -> MarketSpec:
        return MarketSpec(x=self.x0, k=k, T=T)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        n_paths: int | None = None,
        n_terms: int | None = None,
        directory: Path | str | None = None,
        workers: int | None = None,
    ) -> "ExperimentConfig":
        """New config with command-line overrides applied (None keeps the file value)."""
        changes: dict[str, object] = {}
        if seed is not None:
            changes["seed"] = seed
        if n_paths is not None:
            changes["n_paths"] = n_paths
        if n_terms is not None:
            changes["n_terms"] = n_terms
            changes["n_max"] = max(self.n_max, n_terms + 1)
        if directory is not None:
            changes["directory"] = Path(directory)
        if workers is not None:
            changes["workers"] = workers
        return replace(self, **changes) if changes else self


def _collect(lines: list[ConfigLine]) -> dict[str, dict[str, tuple[object, int]]]:
    """Group converted values by section, keeping the line each came from."""
    values: dict[str, dict[str, tuple[object, int]]] = {}
    section: str | None = None
    for line in lines:
        if line.section is not None:
            if line.section not in _SCHEMA:
                raise ConfigError(f"Line {line.line_number}: unknown section '[{line.section}]'.")
            if line.section in values:
                raise ConfigError(f"Line {line.line_number}: section '[{line.section}]' appears twice.")
            section = line.section
            values[section] = {}
            continue
        if section is None:
            raise ConfigError(f"Line {line.line_number}: '{line.text}' appears before any section header.")
        schema = _SCHEMA[section]
        if line.key not in schema:
            known = ", ".join(schema)
            raise ConfigError(
                f"Line {line.line_number}: unknown key '{line.key}' in [{section}] (expected one of: {known})."
            )
        if line.key in values[section]:
            raise ConfigError(f"Line {line.line_number}: key '{line.key}' is set twice in [{section}].")
        converter, _ = schema[line.key]
        try:
            values[section][line.key] = (converter(line.value), line.line_number)
        except ValueError as e:
            raise ConfigError(f"Line {line.line_number}: invalid value for '{line.key}': {e}.") from e
    return values


def _section(values: dict[str, dict[str, tuple[object, int]]], name: str) -> dict[str, object]:
    """Values of one section with defaults filled in."""
    given = values.get(name, {})
    result: dict[str, object] = {}
    for key, (_, default) in _SCHEMA[name].items():
        if key in given:
            result[key] = given[key][0]
        elif default is _REQUIRED:
            raise ConfigError(f"Missing required key '{key}' in [{name}].")
        else:
            result[key] = default
    return result


def _build_model(model: dict[str, object]) -> VolModel:
    kind = model["type"]
    if kind is ModelKind.SABR:
        unused = [key for key in ("kappa", "theta") if model[key] is not None]
        if unused:
            raise ConfigError(f"[model] {', '.join(unused)} is not a SABR parameter.")
    elif model["kappa"] is None or model["theta"] is None:
        raise ConfigError("[model] heston needs both kappa and theta.")
    description = {"model": str(kind), **{k: v for k, v in model.items() if k != "type" and v is not None}}
    try:
        return model_from_description(description)
    except DomainError as e:
        raise ConfigError(f"[model] {e}") from e


def parse_config(text: str) -> ExperimentConfig:
    """Parse the text of an experiment file.

    Raises:
        ConfigError: On any syntax or validation problem.
    """
    lines = [line for n, raw in enumerate(text.splitlines(), start=1) if (line := _parse_line(raw, n))]
    values = _collect(lines)
    model = _section(values, "model")
    market = _section(values, "market")
    sim = _section(values, "sim")
    series = _section(values, "series")
    greeks = _section(values, "greeks")
    cv = _section(values, "cv")
    output = _section(values, "output")
    return ExperimentConfig(
        model=_build_model(model),
        x0=market["x0"],
        maturities=market["maturities"],
        strikes=market["strikes"],
        n_paths=sim["n_paths"],
        seed=sim["seed"],
        steps_per_year=sim["steps_per_year"],
        antithetic=sim["antithetic"],
        workers=sim["workers"],
        n_terms=series["n_terms"],
        n_star_tol=series["n_star_tol"],
        n_max=series["n_max"],
        fd_step=greeks["fd_step"],
        cv_out_of_sample=cv["out_of_sample"],
        directory=Path(output["directory"]),
        format_version=output["format_version"],
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and parse an experiment file.

    Raises:
        ConfigError: If the file cannot be read or does not parse.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file '{path}': {e.strerror or e}.") from e
    config = parse_config(text)
    logger.info("Loaded %s (config hash %s)", path, config.config_hash[:12])
    return config
