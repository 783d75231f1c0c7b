"""Fractional moments of the average variance, and their on-disk tables.

Responsibility:
- Estimate E[M_T^(1/2 - n)], n = 0..n_max, where M_T = (1/T) int_0^T sigma_s^2 ds
  is the realized average variance of a simulated batch.
- Derive the variance swap v (closed form), the volatility swap v_hat = E sqrt(M_T)
  and the moment gaps D_n = E[M_T^(1/2 - n)] - M_0^(1/2 - n).
- Persist tables in a versioned plain-text format and reload them safely.
- Estimate path integrals E int_0^T v_s^(-p) d<M,M>_s, the right-hand sides of the
  convexity relation v - v_hat = (1/8) E int v_s^-3 d<M,M>_s and of the moment
  identity 2 D_n / (n^2 - 1/4) = E int v_s^-(3+2n) d<M,M>_s.

Design notes:
- Powers down to 1/2 - n_max are taken in log space, and the path average uses
  scipy.special.logsumexp, so no intermediate overflows.
- Integrated variances below IV_FLOOR_FACTOR * M_0 are floored with a warning;
  when more than IV_FLOOR_MAX_FRACTION of the paths need it the run is rejected.
- v comes from the closed form M_0, v_hat from the Monte Carlo mean. The Jensen
  ordering v_hat <= v is reported by :meth:`MomentTable.jensen_violations`
  rather than enforced, since Monte Carlo noise can break it on tiny batches.

File format (one ``key = value`` per line, then one ``n, moment, std_error`` row
per n after a ``[moments]`` marker; every float with 17 significant digits)::

    # normvol moment table
    format_version = 1
    fingerprint = <sha256>
    model = heston
    ...
    [moments]
    0, 19.843..., 0.0123...

Entry points / public API:
- :class:`MomentTable`
- :func:`estimate_moments`, :func:`convexity_gap`, :func:`qv_path_integral`
- :func:`save_table`, :func:`load_table`
"""

from dataclasses import dataclass, field
from pathlib import Path
import logging
import math

import numpy as np
from scipy.special import logsumexp

from common.constants import (
    IV_FLOOR_FACTOR,
    IV_FLOOR_MAX_FRACTION,
    MOMENT_TABLE_FORMAT_VERSION,
    PATHS_PER_BLOCK,
    DomainError,
    MissingPathDataError,
    MomentTableError,
    SimulationError,
    StaleCacheError,
    TableParseError,
)
from common.utils import formatted_value, parse_value
from pricing.vol_models import (
    VolModel,
    conditional_mean_variance,
    m0,
    model_from_description,
    qv_density_of_M,
)
from simulator.estimate import McEstimate, estimate_from_samples, fold_pairs
from simulator.paths import PathBatch

logger = logging.getLogger(__name__)

MOMENTS_MARKER = "[moments]"


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Fractional moments of one (model, T, simulation config) batch.

    Attributes:
        fingerprint: Content hash of the simulation inputs.
        model: Model the moments were estimated for.
        T: Maturity.
        moments: Entry n estimates E[M_T^(1/2 - n)], n = 0..n_max.
        std_errors: Standard errors, same indexing.
        v: Variance-swap volatility sqrt(M_0), closed form.
        n_paths: Paths behind the estimates.
        seed: Seed of the simulation.
        steps_per_year: Grid density of the simulation.
        antithetic: Whether antithetic pairs were used.
    """

    fingerprint: str
    model: VolModel
    T: float
    moments: np.ndarray
    std_errors: np.ndarray
    v: float
    n_paths: int
    seed: int
    steps_per_year: int
    antithetic: bool
    moment_gaps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        moments = np.asarray(self.moments, dtype=float)
        std_errors = np.asarray(self.std_errors, dtype=float)
        if moments.ndim != 1 or moments.shape[0] < 2:
            raise MomentTableError("A moment table needs entries for n = 0 and at least n = 1.")
        if std_errors.shape != moments.shape:
            raise MomentTableError(
                f"Got {std_errors.shape[0]} standard errors for {moments.shape[0]} moments."
            )
        if not np.all(np.isfinite(moments)) or np.any(moments <= 0.0):
            bad = [n for n, value in enumerate(moments) if not (math.isfinite(value) and value > 0.0)]
            raise MomentTableError(f"Moments must be finite and positive; offending n: {bad}.")
        if not np.all(np.isfinite(std_errors)) or np.any(std_errors < 0.0):
            raise MomentTableError("Standard errors must be finite and non-negative.")
        if not (math.isfinite(self.v) and self.v > 0.0):
            raise MomentTableError(f"Variance-swap volatility must be positive, got {self.v}.")
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise MomentTableError(f"Maturity must be positive, got T={self.T}.")
        moments.setflags(write=False)
        std_errors.setflags(write=False)
        object.__setattr__(self, "moments", moments)
        object.__setattr__(self, "std_errors", std_errors)

        exponents = 0.5 - np.arange(moments.shape[0])
        gaps = moments - np.exp(exponents * math.log(self.v * self.v))
        gaps[0] = moments[0] - self.v
        gaps.setflags(write=False)
        object.__setattr__(self, "moment_gaps", gaps)

    @property
    def n_max(self) -> int:
        return int(self.moments.shape[0] - 1)

    @property
    def v_hat(self) -> float:
        """Volatility swap E sqrt(M_T)."""
        return float(self.moments[0])

    @property
    def m0(self) -> float:
        """Variance swap M_0 = v^2."""
        return self.v * self.v

    def jensen_violations(self) -> list[int]:
        """Indices n whose gap has the wrong sign (D_0 > 0 or D_n < 0 for n >= 1)."""
        gaps = self.moment_gaps
        violations = [0] if gaps[0] > 0.0 else []
        violations.extend(int(n) for n in np.flatnonzero(gaps[1:] < 0.0) + 1)
        return violations


def _floored_variance(batch: PathBatch, m0_value: float) -> np.ndarray:
    """Integrated variances with the positivity floor applied."""
    iv = np.asarray(batch.integrated_variance, dtype=float)
    floor = IV_FLOOR_FACTOR * m0_value
    below = int(np.count_nonzero(~(iv >= floor)))
    if below == 0:
        return iv
    if below > IV_FLOOR_MAX_FRACTION * iv.shape[0]:
        raise SimulationError(
            f"{below} of {iv.shape[0]} paths have integrated variance below {floor:g}; "
            "refine the time grid."
        )
    logger.warning("Flooring %d integrated variance(s) at %g", below, floor)
    return np.where(iv >= floor, iv, floor)


def _log_space_moment(log_iv: np.ndarray, exponent: float, antithetic: bool) -> tuple[float, float]:
    """Mean and standard error of exp(exponent * log_iv) without overflow."""
    scaled_logs = exponent * log_iv
    n = scaled_logs.shape[0]
    moment = math.exp(float(logsumexp(scaled_logs)) - math.log(n))
    shift = float(np.max(scaled_logs))
    folded = fold_pairs(np.exp(scaled_logs - shift), antithetic)
    if folded.shape[0] < 2:
        return moment, 0.0
    std_error = float(np.std(folded, ddof=1)) / math.sqrt(folded.shape[0]) * math.exp(shift)
    return moment, std_error


def estimate_moments(batch: PathBatch, model: VolModel, T: float, n_max: int) -> MomentTable:
    """Estimate E[M_T^(1/2 - n)] for n = 0..n_max from a simulated batch.

    Raises:
        DomainError: If n_max < 1 or T differs from the batch maturity.
        SimulationError: If too many integrated variances fall below the floor.
        MomentTableError: If a moment overflows.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be at least 1, got {n_max}.")
    if not math.isclose(T, batch.T, rel_tol=1e-12):
        raise DomainError(f"Batch was simulated for T={batch.T}, not T={T}.")
    if batch.n_paths == 0:
        raise SimulationError("Cannot estimate moments from an empty batch.")
    m0_value = m0(model, T)
    log_iv = np.log(_floored_variance(batch, m0_value))
    moments = np.empty(n_max + 1)
    std_errors = np.empty(n_max + 1)
    for n in range(n_max + 1):
        moments[n], std_errors[n] = _log_space_moment(log_iv, 0.5 - n, batch.antithetic)
    logger.info("Estimated %d moments from %d paths", n_max + 1, batch.n_paths)
    return MomentTable(
        fingerprint=batch.fingerprint,
        model=model,
        T=T,
        moments=moments,
        std_errors=std_errors,
        v=math.sqrt(m0_value),
        n_paths=batch.n_paths,
        seed=batch.config.seed,
        steps_per_year=batch.config.steps_per_year,
        antithetic=batch.antithetic,
    )


def convexity_gap(table: MomentTable) -> float:
    """v - v_hat, the variance-swap / volatility-swap convexity adjustment."""
    return table.v - table.v_hat


def martingale_nodes(batch: PathBatch, model: VolModel, rows: slice) -> tuple[np.ndarray, np.ndarray]:
    """v_s = sqrt(M_s) and d<M,M>_s/ds at every node for a slice of paths.

    M_s combines the realized trapezoidal variance up to s with the model's
    conditional expectation of the remaining variance.

    Raises:
        MissingPathDataError: If the batch was simulated without keep_grid.
    """
    if batch.sigma_sq_nodes is None:
        raise MissingPathDataError("This computation needs a batch simulated with keep_grid=True.")
    nodes = batch.sigma_sq_nodes[rows]
    times = batch.times
    dt = np.diff(times)
    realized = np.zeros_like(nodes)
    np.cumsum(0.5 * (nodes[:, 1:] + nodes[:, :-1]) * dt, axis=1, out=realized[:, 1:])
    m_s = conditional_mean_variance(model, realized, nodes, times, batch.T)
    density = qv_density_of_M(model, nodes, times, batch.T)
    return np.sqrt(np.maximum(m_s, 0.0)), density


def trapezoid_in_time(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Per-path trapezoidal integral over the time grid."""
    dt = np.diff(times)
    return np.sum(0.5 * (values[:, 1:] + values[:, :-1]) * dt, axis=1)


def qv_path_integral(batch: PathBatch, model: VolModel, power: float) -> McEstimate:
    """Estimate E int_0^T v_s^(-power) d<M,M>_s along the batch's paths."""
    per_path = np.empty(batch.n_paths)
    for start in range(0, batch.n_paths, PATHS_PER_BLOCK):
        rows = slice(start, start + PATHS_PER_BLOCK)
        v_s, density = martingale_nodes(batch, model, rows)
        with np.errstate(divide="ignore"):
            integrand = np.where(density > 0.0, density * np.power(v_s, -power), 0.0)
        per_path[rows] = trapezoid_in_time(integrand, batch.times)
    return estimate_from_samples(per_path, batch.antithetic)


def _header(table: MomentTable) -> dict[str, object]:
    header: dict[str, object] = {"format_version": MOMENT_TABLE_FORMAT_VERSION, "fingerprint": table.fingerprint}
    header.update(table.model.describe())
    header.update(
        {
            "T": table.T,
            "seed": table.seed,
            "n_paths": table.n_paths,
            "steps_per_year": table.steps_per_year,
            "antithetic": table.antithetic,
            "n_max": table.n_max,
            "v": table.v,
            "v_hat": table.v_hat,
        }
    )
    return header


def save_table(table: MomentTable, path: str | Path) -> Path:
    """Write a table; writing the same table twice gives identical bytes."""
    path = Path(path)
    lines = ["# normvol moment table"]
    lines.extend(f"{key} = {formatted_value(value)}" for key, value in _header(table).items())
    lines.append(MOMENTS_MARKER)
    for n in range(table.n_max + 1):
        lines.append(f"{n}, {formatted_value(float(table.moments[n]))}, {formatted_value(float(table.std_errors[n]))}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote moment table %s", path)
    return path


def _parse_header_line(line: str, line_number: int) -> tuple[str, str]:
    key, sep, value = line.partition("=")
    if not sep or not key.strip():
        raise TableParseError(f"Line {line_number}: expected 'key = value', got '{line}'.")
    return key.strip(), value.strip()


def _parse_row(line: str, line_number: int) -> tuple[int, float, float]:
    parts = [part.strip() for part in line.split(",")]
    if len(parts) != 3:
        raise TableParseError(f"Line {line_number}: expected 'n, moment, std_error', got '{line}'.")
    try:
        return int(parts[0]), parse_value(parts[1]), parse_value(parts[2])
    except ValueError as e:
        raise TableParseError(f"Line {line_number}: {e} in '{line}'.") from e


def load_table(path: str | Path, expected_fingerprint: str | None = None) -> MomentTable:
    """Read a table written by :func:`save_table`.

    Args:
        path: Table file.
        expected_fingerprint: Fingerprint of the simulation the caller wants; a
            different stored fingerprint means the cache is stale.

    Raises:
        TableParseError: If the file is malformed or from another format version.
        MomentTableError: If the stored values break a table invariant.
        StaleCacheError: If the fingerprint does not match.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise TableParseError(f"Cannot read moment table {path}: {e}") from e

    header: dict[str, str] = {}
    rows: list[tuple[int, float, float]] = []
    in_moments = False
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == MOMENTS_MARKER:
            in_moments = True
        elif in_moments:
            rows.append(_parse_row(line, line_number))
        else:
            key, value = _parse_header_line(line, line_number)
            if key in header:
                raise TableParseError(f"Line {line_number}: duplicated key '{key}'.")
            header[key] = value

    try:
        version = int(header["format_version"])
        if version != MOMENT_TABLE_FORMAT_VERSION:
            raise TableParseError(f"{path}: format version {version} is not supported.")
        if [n for n, _, _ in rows] != list(range(len(rows))):
            raise TableParseError(f"{path}: moment rows must be numbered 0, 1, 2, ... in order.")
        if len(rows) != int(header["n_max"]) + 1:
            raise TableParseError(f"{path}: header announces n_max={header['n_max']} but has {len(rows)} rows.")
        table = MomentTable(
            fingerprint=header["fingerprint"],
            model=model_from_description(header),
            T=parse_value(header["T"]),
            moments=np.array([row[1] for row in rows]),
            std_errors=np.array([row[2] for row in rows]),
            v=parse_value(header["v"]),
            n_paths=int(header["n_paths"]),
            seed=int(header["seed"]),
            steps_per_year=int(header["steps_per_year"]),
            antithetic=header["antithetic"] == "true",
        )
    except KeyError as e:
        raise TableParseError(f"{path}: missing header key {e.args[0]!r}.") from e
    except (ValueError, DomainError) as e:
        raise TableParseError(f"{path}: {e}") from e

    if expected_fingerprint is not None and table.fingerprint != expected_fingerprint:
        raise StaleCacheError(
            f"{path} was built for other simulation inputs "
            f"(stored {table.fingerprint[:12]}, requested {expected_fingerprint[:12]})."
        )
    logger.info("Loaded moment table %s", path)
    return table
