"""The normvol commands: each turns an experiment config into CSV reports.

Responsibility:
- cmd_price: series prices per (T, k), optionally next to the conditional Monte
  Carlo benchmark and its 95% interval.
- cmd_smile: implied volatilities of series and benchmark, with relative error.
- cmd_nstar: optimal truncation order and the implied-vol gap it achieves.
- cmd_greeks: Delta/Gamma by three methods and the time each took.
- cmd_cv: control-variate variances and reduction factors over the strike grid.
- cmd_moments: build and store the moment tables, with a summary report.

Design notes:
- :class:`Workspace` owns the per-maturity volatility batches and moment
  tables of one run. Tables are cached in ``<out>/tables`` under their
  simulation fingerprint, so a table is only rebuilt when its inputs change.
- The benchmark batch and the moment table of a maturity come from the same
  simulated paths, so series and benchmark differ by truncation only.
- Row-level failures in smile and nstar reports are written into a ``status``
  column; every other error propagates to the CLI.

Entry point:
- :data:`COMMANDS`, mapping each :class:`Command` to its function.
"""

from collections.abc import Callable
from pathlib import Path
import logging
import math

from common.constants import (
    STUDY_CV_KINDS,
    ArbitrageError,
    Command,
    DomainError,
    GreekMethod,
    MomentTableError,
    NonConvergenceError,
    StaleCacheError,
    TableParseError,
)
from interface.config import ExperimentConfig
from interface.reporting import format_console_table, write_csv
from pricing.bachelier import implied_vol_bachelier
from pricing.series import optimal_terms, series_price
from simulator.bench import conditional_price, control_variate_from_batch, full_mc_price, greek_benchmark
from simulator.moments import MomentTable, convexity_gap, estimate_moments, load_table, save_table
from simulator.paths import PathBatch, simulate_asset_terminal, simulate_vol_paths, simulation_fingerprint

logger = logging.getLogger(__name__)


class Workspace:
    """Lazily simulated batches and cached moment tables for one config."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self._batches: dict[float, PathBatch] = {}
        self._tables: dict[float, MomentTable] = {}

    @property
    def table_dir(self) -> Path:
        return self.config.directory / "tables"

    def table_path(self, T: float) -> Path:
        fingerprint = simulation_fingerprint(self.config.model, T, self.config.sim_config())
        return self.table_dir / f"{self.config.model.kind}_T{T:g}_{fingerprint[:16]}.txt"

    def vol_batch(self, T: float) -> PathBatch:
        if T not in self._batches:
            self._batches[T] = simulate_vol_paths(self.config.model, T, self.config.sim_config())
        return self._batches[T]

    def table(self, T: float) -> MomentTable:
        """Moment table for maturity T, from the cache file when still valid."""
        if T in self._tables:
            return self._tables[T]
        cfg = self.config.sim_config()
        fingerprint = simulation_fingerprint(self.config.model, T, cfg)
        path = self.table_path(T)
        table = None
        if path.exists():
            try:
                table = load_table(path, fingerprint)
                if table.n_max < self.config.n_max:
                    logger.info("Cached table %s stops at n=%d; rebuilding", path, table.n_max)
                    table = None
            except (StaleCacheError, TableParseError, MomentTableError) as e:
                logger.warning("Ignoring cached table: %s", e)
                table = None
        if table is None:
            table = estimate_moments(self.vol_batch(T), self.config.model, T, self.config.n_max)
            save_table(table, path)
        self._tables[T] = table
        return table


def _require_uncorrelated(config: ExperimentConfig, command: Command) -> None:
    if config.model.rho != 0.0:
        raise DomainError(
            f"'{command}' prices the uncorrelated model; rho={config.model.rho} is only supported by 'cv'."
        )


def _grid(config: ExperimentConfig, maturity: float | None = None, strike: float | None = None):
    maturities = (maturity,) if maturity is not None else config.maturities
    strikes = (strike,) if strike is not None else config.strikes
    return [(T, k) for T in maturities for k in strikes]


def cmd_price(
    config: ExperimentConfig,
    strike: float | None = None,
    maturity: float | None = None,
    benchmark: bool = False,
) -> list[Path]:
    """Series prices, and with benchmark the conditional Monte Carlo reference."""
    _require_uncorrelated(config, Command.PRICE)
    workspace = Workspace(config)
    columns = ["T", "strike", "leading", "series_price", "n_used", "wing_divergence"]
    if benchmark:
        columns += ["mc_price", "mc_std_error", "mc_ci_low", "mc_ci_high", "series_in_ci"]
    rows = []
    for T, k in _grid(config, maturity, strike):
        m = config.market(T, k)
        series = series_price(m, workspace.table(T), config.n_terms)
        row: list[object] = [T, k, series.leading, series.price, series.n_used, series.wing_divergence]
        if benchmark:
            mc = conditional_price(m, workspace.vol_batch(T))
            low, high = mc.ci95
            row += [mc.value, mc.std_error, low, high, bool(low <= series.price <= high)]
        rows.append(row)
    print(format_console_table(columns, rows))
    return [write_csv(config.directory / "price.csv", columns, rows, config)]


def cmd_smile(config: ExperimentConfig) -> list[Path]:
    """Implied volatilities of the series against the conditional Monte Carlo benchmark."""
    _require_uncorrelated(config, Command.SMILE)
    workspace = Workspace(config)
    columns = ["T", "strike", "iv_series", "iv_benchmark", "rel_error", "status"]
    rows = []
    for T, k in _grid(config):
        m = config.market(T, k)
        series = series_price(m, workspace.table(T), config.n_terms)
        mc = conditional_price(m, workspace.vol_batch(T))
        try:
            iv_series = implied_vol_bachelier(m, series.price)
            iv_benchmark = implied_vol_bachelier(m, mc.value)
        except (ArbitrageError, NonConvergenceError) as e:
            logger.warning("No implied volatility at T=%s, k=%s: %s", T, k, e)
            rows.append([T, k, math.nan, math.nan, math.nan, f"iv_failed: {type(e).__name__}"])
            continue
        rel_error = abs(iv_series - iv_benchmark) / iv_benchmark if iv_benchmark > 0.0 else math.nan
        status = "wing_divergence" if series.wing_divergence else "ok"
        rows.append([T, k, iv_series, iv_benchmark, rel_error, status])
    return [write_csv(config.directory / "smile.csv", columns, rows, config)]


def cmd_nstar(config: ExperimentConfig) -> list[Path]:
    """Optimal number of series terms per (T, k)."""
    _require_uncorrelated(config, Command.NSTAR)
    workspace = Workspace(config)
    columns = ["T", "strike", "n_star", "err_next", "status"]
    rows = []
    for T, k in _grid(config):
        try:
            n_star, err = optimal_terms(config.market(T, k), workspace.table(T), config.n_star_tol)
            rows.append([T, k, n_star, err, "ok"])
        except NonConvergenceError as e:
            logger.warning("%s", e)
            rows.append([T, k, None, math.nan, "not_converged"])
    return [write_csv(config.directory / "nstar.csv", columns, rows, config)]


def cmd_greeks(config: ExperimentConfig) -> list[Path]:
    """Greeks by series, conditional Monte Carlo and FD on full Monte Carlo, with timings."""
    _require_uncorrelated(config, Command.GREEKS)
    workspace = Workspace(config)
    value_rows, timing_rows = [], []
    for T in config.maturities:
        table = workspace.table(T)
        result = greek_benchmark(
            config.market(T, config.strikes[0]),
            config.model,
            config.sim_config(),
            table,
            strikes=config.strikes,
            n_terms=config.n_terms,
            fd_step=config.fd_step,
        )
        for method in GreekMethod:
            for greeks in result.values[method]:
                value_rows.append(
                    [T, greeks.strike, str(method), greeks.delta.value, greeks.delta.std_error,
                     greeks.gamma.value, greeks.gamma.std_error]
                )
            timing_rows.append([T, str(method), result.seconds[method]])
    value_columns = ["T", "strike", "method", "delta", "delta_std_error", "gamma", "gamma_std_error"]
    return [
        write_csv(config.directory / "greeks.csv", value_columns, value_rows, config),
        write_csv(config.directory / "greeks_timing.csv", ["T", "method", "seconds"], timing_rows,
                  config, nondeterministic=("seconds",)),
    ]


def cmd_cv(config: ExperimentConfig) -> list[Path]:
    """Variance reduction of CV1-CV4 over the strike grid."""
    workspace = Workspace(config)
    columns = ["T", "strike", "price_plain", "var_plain"]
    for kind in STUDY_CV_KINDS:
        columns += [f"beta_{kind}", f"var_cv_{kind}", f"factor_{kind}"]
    rows = []
    for T in config.maturities:
        # Same seed as the table's batch, hence the same volatility paths.
        batch = simulate_asset_terminal(config.model, config.x0, T, config.sim_config(), couple_rho0=True)
        table = workspace.table(T)
        for k in config.strikes:
            m = config.market(T, k)
            reference = series_price(m, table, config.n_terms)
            results = [
                control_variate_from_batch(m, batch, kind, table, reference, config.cv_out_of_sample)
                for kind in STUDY_CV_KINDS
            ]
            row: list[object] = [T, k, full_mc_price(m, batch).value, results[0].var_plain]
            for result in results:
                row += [result.beta_star, result.var_cv, result.reduction_factor]
            rows.append(row)
    return [write_csv(config.directory / "cv.csv", columns, rows, config)]


def cmd_moments(config: ExperimentConfig) -> list[Path]:
    """Build (or reuse) and store a moment table per maturity, plus a summary."""
    workspace = Workspace(config)
    columns = ["T", "n", "moment", "std_error", "gap"]
    summary_columns = ["T", "v", "v_hat", "convexity_gap", "jensen_violations", "table_file"]
    rows, summary = [], []
    paths: list[Path] = []
    for T in config.maturities:
        table = workspace.table(T)
        path = workspace.table_path(T)
        paths.append(path)
        for n in range(table.n_max + 1):
            rows.append([T, n, float(table.moments[n]), float(table.std_errors[n]), float(table.moment_gaps[n])])
        violations = table.jensen_violations()
        if violations:
            logger.warning("T=%s: moment gaps with the wrong sign at n=%s", T, violations)
        summary.append([T, table.v, table.v_hat, convexity_gap(table), len(violations), path.name])
    paths.append(write_csv(config.directory / "moments.csv", columns, rows, config))
    paths.append(write_csv(config.directory / "moments_summary.csv", summary_columns, summary, config))
    return paths


COMMANDS: dict[Command, Callable[[ExperimentConfig], list[Path]]] = {
    Command.PRICE: cmd_price,
    Command.SMILE: cmd_smile,
    Command.NSTAR: cmd_nstar,
    Command.GREEKS: cmd_greeks,
    Command.CV: cmd_cv,
    Command.MOMENTS: cmd_moments,
}
