"""Monte Carlo benchmarks: reference prices, Greeks, and the control-variate study.

Responsibility:
- Conditional ("mixing") Monte Carlo for rho = 0: average Bac(T, x, k, sqrt(M_T))
  over simulated volatility paths.
- Full Monte Carlo of the payoff (X_T - k)+ for any rho.
- Greeks three ways: from the series (pricing.series), pathwise through the
  conditional expectation, and by central finite differences of full Monte Carlo
  with common random numbers.
- Variance reduction of the full Monte Carlo payoff by the control variates
  CV1 X_T - x0, CV2 M_T - M_0, CV3 sqrt(M_T) - v_hat and
  CV4 (X_T^0 - k)+ - V_series, with beta* = Cov(payoff, Z) / Var(Z).

Design notes:
- Variances in the control-variate study are per-path variances of the payoff
  samples. Standard errors of reported prices fold antithetic pairs first.
- The in-sample controlled variance is var_plain (1 - corr^2), the exact OLS
  residual variance, so it never exceeds var_plain.
- Finite differences resimulate at x0 - h, x0 and x0 + h. With common random
  numbers the three runs share a seed; otherwise they use seeds s, s+1, s+2.

Entry points / public API:
- :func:`conditional_price`, :func:`full_mc_price`
- :func:`conditional_greeks`, :func:`fd_greeks_mc`, :func:`greek_benchmark`
- :class:`CvResult`, :func:`control_variate_from_batch`, :func:`control_variate_study`
"""

from collections.abc import Sequence
from dataclasses import dataclass, replace
import logging
import math
import time

import numpy as np

from common.constants import (
    DEFAULT_FD_STEP,
    DEFAULT_N_TERMS,
    CvKind,
    DegenerateControlVariateError,
    DomainError,
    GreekMethod,
    MissingPathDataError,
    SimulationError,
)
from pricing.bachelier import MarketSpec, bachelier_delta, bachelier_gamma, bachelier_price
from pricing.series import SeriesPrice, series_delta, series_gamma, series_price
from pricing.vol_models import VolModel, m0
from simulator.estimate import McEstimate, estimate_from_samples
from simulator.moments import MomentTable, estimate_moments
from simulator.paths import PathBatch, SimConfig, simulate_asset_terminal, simulate_vol_paths

logger = logging.getLogger(__name__)


def _check_maturity(m: MarketSpec, batch: PathBatch) -> None:
    if not math.isclose(m.T, batch.T, rel_tol=1e-12):
        raise DomainError(f"Batch was simulated for T={batch.T}, not T={m.T}.")


def _realized_vol(batch: PathBatch) -> np.ndarray:
    return np.sqrt(batch.integrated_variance)


def conditional_price(m: MarketSpec, batch: PathBatch) -> McEstimate:
    """Mean of Bac(T, x, k, sqrt(M_T)) over the batch (valid for rho = 0)."""
    _check_maturity(m, batch)
    if batch.n_paths == 0:
        raise SimulationError("Cannot price from an empty batch.")
    return estimate_from_samples(bachelier_price(m, _realized_vol(batch)), batch.antithetic)


def _terminal(batch: PathBatch, use_rho0: bool) -> np.ndarray:
    values = batch.terminal_x_rho0 if use_rho0 else batch.terminal_x
    if values is None:
        wanted = "X_T^0" if use_rho0 else "X_T"
        raise MissingPathDataError(f"Batch has no simulated {wanted}.")
    return values


def full_mc_price(m: MarketSpec, batch: PathBatch, use_rho0: bool = False) -> McEstimate:
    """Mean of the payoff (X_T - k)+; with use_rho0 the uncorrelated twin X_T^0 is used."""
    _check_maturity(m, batch)
    payoff = np.maximum(_terminal(batch, use_rho0) - m.k, 0.0)
    return estimate_from_samples(payoff, batch.antithetic)


def conditional_greeks(m: MarketSpec, batch: PathBatch) -> tuple[McEstimate, McEstimate]:
    """Pathwise Delta and Gamma of the conditional estimator.

    Delta = E N(d(sigma_i)), Gamma = E N'(d(sigma_i)) / (sigma_i sqrt(T)),
    with sigma_i the realized volatility of path i.
    """
    _check_maturity(m, batch)
    sigma = _realized_vol(batch)
    if np.any(sigma <= 0.0):
        raise SimulationError("Pathwise Gamma needs strictly positive realized volatilities.")
    delta = estimate_from_samples(bachelier_delta(m, sigma), batch.antithetic)
    gamma = estimate_from_samples(bachelier_gamma(m, sigma), batch.antithetic)
    return delta, gamma


def _fd_samples(
    x0: float,
    T: float,
    strikes: Sequence[float],
    model: VolModel,
    cfg: SimConfig,
    h: float,
    common_random_numbers: bool,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-path central-difference Delta and Gamma samples for each strike."""
    if not (math.isfinite(h) and h > 0.0):
        raise DomainError(f"Finite-difference step must be positive, got {h}.")
    seeds = (cfg.seed,) * 3 if common_random_numbers else (cfg.seed, cfg.seed + 1, cfg.seed + 2)
    down, mid, up = (
        simulate_asset_terminal(model, x, T, replace(cfg, seed=seed, keep_grid=False)).terminal_x
        for x, seed in zip((x0 - h, x0, x0 + h), seeds)
    )
    deltas, gammas = [], []
    for k in strikes:
        p_down = np.maximum(down - k, 0.0)
        p_mid = np.maximum(mid - k, 0.0)
        p_up = np.maximum(up - k, 0.0)
        deltas.append((p_up - p_down) / (2.0 * h))
        gammas.append((p_up - 2.0 * p_mid + p_down) / (h * h))
    return deltas, gammas


def fd_greeks_mc(
    m: MarketSpec,
    model: VolModel,
    cfg: SimConfig,
    h: float = DEFAULT_FD_STEP,
    common_random_numbers: bool = True,
) -> tuple[McEstimate, McEstimate]:
    """Central finite-difference Delta and Gamma of full Monte Carlo."""
    deltas, gammas = _fd_samples(m.x, m.T, [m.k], model, cfg, h, common_random_numbers)
    return (
        estimate_from_samples(deltas[0], cfg.antithetic),
        estimate_from_samples(gammas[0], cfg.antithetic),
    )


@dataclass(frozen=True)
class GreekValues:
    """Delta and Gamma of one method at one strike."""

    method: GreekMethod
    strike: float
    delta: McEstimate
    gamma: McEstimate


@dataclass(frozen=True)
class GreekBenchmark:
    """Greeks of every method over a strike grid, with wall-clock seconds per method."""

    values: dict[GreekMethod, list[GreekValues]]
    seconds: dict[GreekMethod, float]


def greek_benchmark(
    m: MarketSpec,
    model: VolModel,
    cfg: SimConfig,
    table: MomentTable,
    strikes: Sequence[float] | None = None,
    n_terms: int = DEFAULT_N_TERMS,
    fd_step: float = DEFAULT_FD_STEP,
) -> GreekBenchmark:
    """Delta and Gamma by series, conditional Monte Carlo and FD on full Monte Carlo.

    The series is timed on a stored moment table; the Monte Carlo methods are
    timed including their simulations.

    Raises:
        DomainError: If rho != 0 (series and conditional methods need it).
    """
    if model.rho != 0.0:
        raise DomainError(f"Greek benchmark needs rho = 0, got rho={model.rho}.")
    strikes = list(strikes) if strikes is not None else [m.k]
    values: dict[GreekMethod, list[GreekValues]] = {}
    seconds: dict[GreekMethod, float] = {}

    start = time.perf_counter()
    rows = []
    for k in strikes:
        mk = m.with_strike(k)
        delta = McEstimate(series_delta(mk, table, n_terms), 0.0, table.n_paths)
        gamma = McEstimate(series_gamma(mk, table, n_terms), 0.0, table.n_paths)
        rows.append(GreekValues(GreekMethod.SERIES, k, delta, gamma))
    seconds[GreekMethod.SERIES] = time.perf_counter() - start
    values[GreekMethod.SERIES] = rows

    start = time.perf_counter()
    batch = simulate_vol_paths(model, m.T, replace(cfg, keep_grid=False))
    rows = [GreekValues(GreekMethod.CONDITIONAL_MC, k, *conditional_greeks(m.with_strike(k), batch)) for k in strikes]
    seconds[GreekMethod.CONDITIONAL_MC] = time.perf_counter() - start
    values[GreekMethod.CONDITIONAL_MC] = rows

    start = time.perf_counter()
    deltas, gammas = _fd_samples(m.x, m.T, strikes, model, cfg, fd_step, True)
    rows = [
        GreekValues(
            GreekMethod.FD_MC,
            k,
            estimate_from_samples(delta, cfg.antithetic),
            estimate_from_samples(gamma, cfg.antithetic),
        )
        for k, delta, gamma in zip(strikes, deltas, gammas)
    ]
    seconds[GreekMethod.FD_MC] = time.perf_counter() - start
    values[GreekMethod.FD_MC] = rows

    logger.info(
        "Greek timings: %s",
        ", ".join(f"{method}={secs:.3f}s" for method, secs in seconds.items()),
    )
    return GreekBenchmark(values=values, seconds=seconds)


@dataclass(frozen=True)
class CvResult:
    """Outcome of one control-variate estimate.

    Attributes:
        cv_kind: Control variate used.
        beta_star: Cov(payoff, Z) / Var(Z).
        var_plain: Per-path variance of the payoff.
        var_cv: Per-path variance of payoff - beta* Z.
        reduction_factor: var_plain / var_cv (inf when var_cv is 0).
        estimate: Controlled price estimate.
    """

    cv_kind: CvKind
    beta_star: float
    var_plain: float
    var_cv: float
    reduction_factor: float
    estimate: McEstimate


def _control(
    m: MarketSpec,
    batch: PathBatch,
    kind: CvKind,
    payoff: np.ndarray,
    table: MomentTable | None,
    series_ref: SeriesPrice | None,
) -> np.ndarray:
    """Centered control variate Z per path."""
    if kind is CvKind.CV1:
        return _terminal(batch, False) - m.x
    if kind is CvKind.CV2:
        return batch.integrated_variance - m0(batch.model, batch.T)
    if kind is CvKind.CV3:
        if table is None:
            raise DomainError("CV3 needs a moment table for its centering constant v_hat.")
        return _realized_vol(batch) - table.v_hat
    if kind is CvKind.CV4:
        if series_ref is None:
            raise DomainError("CV4 needs the uncorrelated series price as its centering constant.")
        return np.maximum(_terminal(batch, True) - m.k, 0.0) - series_ref.price
    if kind is CvKind.SELF:
        return payoff - payoff.mean()
    raise DomainError(f"Unknown control variate {kind!r}.")


def _beta(payoff: np.ndarray, control: np.ndarray, kind: CvKind) -> tuple[float, float, float, float]:
    """beta*, Var(payoff), Var(Z) and Cov(payoff, Z) with ddof = 1."""
    cov = np.cov(payoff, control, ddof=1)
    var_plain, var_z, covariance = float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1])
    if not var_z > 0.0:
        raise DegenerateControlVariateError(f"Control variate {kind} has zero variance on this batch.")
    return covariance / var_z, var_plain, var_z, covariance


def control_variate_from_batch(
    m: MarketSpec,
    batch: PathBatch,
    kind: CvKind,
    table: MomentTable | None = None,
    series_ref: SeriesPrice | None = None,
    out_of_sample: bool = False,
) -> CvResult:
    """Control-variate estimate of the call price on an existing asset batch.

    With out_of_sample, beta* is fitted on the first half of the paths and
    applied to the second half, which alone produces the estimate.

    Raises:
        MissingPathDataError: If the batch lacks the terminals the CV needs.
        DegenerateControlVariateError: If Var(Z) = 0.
    """
    _check_maturity(m, batch)
    payoff = np.maximum(_terminal(batch, False) - m.k, 0.0)
    control = _control(m, batch, kind, payoff, table, series_ref)

    if not out_of_sample:
        beta, var_plain, var_z, covariance = _beta(payoff, control, kind)
        corr_sq = covariance * covariance / (var_plain * var_z) if var_plain > 0.0 else 0.0
        var_cv = var_plain * max(0.0, 1.0 - corr_sq)
        adjusted = payoff - beta * control
    else:
        half = (batch.n_paths // 4) * 2
        if half < 2:
            raise SimulationError("Out-of-sample fitting needs at least 4 paths.")
        beta, _, _, _ = _beta(payoff[:half], control[:half], kind)
        adjusted = payoff[half:] - beta * control[half:]
        var_plain = float(np.var(payoff[half:], ddof=1))
        var_cv = float(np.var(adjusted, ddof=1))

    if var_cv > 0.0:
        reduction = var_plain / var_cv
    else:
        reduction = math.inf if var_plain > 0.0 else 1.0
    logger.debug("%s at k=%s: beta*=%.6g, reduction %.4g", kind, m.k, beta, reduction)
    return CvResult(
        cv_kind=kind,
        beta_star=beta,
        var_plain=var_plain,
        var_cv=var_cv,
        reduction_factor=reduction,
        estimate=estimate_from_samples(adjusted, batch.antithetic),
    )


def control_variate_study(
    m: MarketSpec,
    model: VolModel,
    cfg: SimConfig,
    cv: CvKind,
    series_ref: SeriesPrice | None = None,
    table: MomentTable | None = None,
    out_of_sample: bool = False,
) -> CvResult:
    """Simulate coupled (X_T, M_T, X_T^0) and apply one control variate.

    Missing centering inputs are built from the simulated batch: the moment
    table from its volatility paths, the CV4 reference from the series on it.
    """
    batch = simulate_asset_terminal(model, m.x, m.T, cfg, couple_rho0=cv is CvKind.CV4)
    if cv in (CvKind.CV3, CvKind.CV4) and table is None and not (cv is CvKind.CV4 and series_ref):
        table = estimate_moments(batch, model, m.T, DEFAULT_N_TERMS)
    if cv is CvKind.CV4 and series_ref is None:
        series_ref = series_price(m, table, DEFAULT_N_TERMS)
    return control_variate_from_batch(m, batch, cv, table, series_ref, out_of_sample)
