"""Moment-series approximation of call prices in the uncorrelated model, plus its Greeks.

Responsibility:
- Price a call from a stored :class:`MomentTable` with the expansion

      V = Bac(T, x, k, v) + sqrt(T / 2 pi) [ (v_hat - v) - sum_n A^n D_n / (n! (2n - 1)) ]

  where A = -(x - k)^2 / (2T) and D_n = E[M_T^(1/2 - n)] - M_0^(1/2 - n).
- Pick the truncation order from the implied-volatility stopping rule.
- Give Delta and Gamma as exact x-derivatives of the truncated series.
- Price through the decomposition V = Bac(T, x, k, v) + (T^2 / 8) E int K_Bac(v_s) d<M,M>_s
  along simulated paths, as an independent check on the series.

Design notes:
- The expansion comes from writing Bac(T, x, k, sigma) as a power series in
  sigma^(1 - 2n) and averaging term by term; evaluated with the moments of a
  batch it reproduces the conditional Monte Carlo price of that same batch up to
  truncation.
- A^n / n! is carried by the recurrence a_n = a_(n-1) A / n, never by powers and
  factorials, so large |A| never overflows before the factorial damps it.
- At the money A = 0, every n >= 1 term vanishes and V = Bac(T, x, x, v_hat).

Entry points / public API:
- :class:`SeriesPrice`
- :func:`series_price`, :func:`optimal_terms`
- :func:`series_delta`, :func:`series_gamma`
- :func:`price_via_decomposition`
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from common.constants import (
    DEFAULT_N_STAR_TOL,
    DEFAULT_N_TERMS,
    PATHS_PER_BLOCK,
    SQRT_2PI,
    ArbitrageError,
    DomainError,
    InsufficientMomentsError,
    NonConvergenceError,
    StaleCacheError,
)
from pricing.bachelier import (
    MarketSpec,
    bachelier_delta,
    bachelier_gamma,
    bachelier_kernel,
    bachelier_price,
    implied_vol_bachelier,
)
from pricing.vol_models import VolModel, m0
from simulator.estimate import McEstimate, estimate_from_samples
from simulator.moments import MomentTable, martingale_nodes, trapezoid_in_time
from simulator.paths import PathBatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SeriesPrice:
    """A truncated series price and its per-order contributions.

    Attributes:
        price: leading + sum(terms).
        terms: terms[0] is the volatility-swap correction sqrt(T/2pi)(v_hat - v),
            terms[n] the n-th moment term.
        n_used: Highest order included.
        leading: Bac(T, x, k, v).
        largest_term_index: Order n >= 1 of the largest |terms[n]| (0 when n_used = 0).
        last_term: |terms[n_used]|.
        wing_divergence: True when the terms were still growing at the cutoff.
    """

    price: float
    terms: np.ndarray
    n_used: int
    leading: float
    largest_term_index: int
    last_term: float
    wing_divergence: bool

    def partial_prices(self) -> np.ndarray:
        """Prices truncated after order 0, 1, ..., n_used."""
        return self.leading + np.cumsum(self.terms)


def _check_table(m: MarketSpec, table: MomentTable, n_terms: int) -> None:
    if n_terms < 0:
        raise DomainError(f"Number of terms must be non-negative, got {n_terms}.")
    if n_terms > table.n_max:
        raise InsufficientMomentsError(
            f"{n_terms} terms requested but the moment table stops at n={table.n_max}."
        )
    if not math.isclose(m.T, table.T, rel_tol=1e-12):
        raise StaleCacheError(f"Moment table was built for T={table.T}, not T={m.T}.")


def _moneyness_power(m: MarketSpec) -> float:
    """A = -(x - k)^2 / (2T)."""
    return -(m.moneyness**2) / (2.0 * m.T)


def series_price(m: MarketSpec, table: MomentTable, n_terms: int = DEFAULT_N_TERMS) -> SeriesPrice:
    """Price a call with the moment series truncated after n_terms orders.

    Raises:
        InsufficientMomentsError: If the table holds fewer than n_terms gaps.
        StaleCacheError: If the table belongs to another maturity.
    """
    _check_table(m, table, n_terms)
    c = math.sqrt(m.T) / SQRT_2PI
    a = _moneyness_power(m)
    gaps = table.moment_gaps
    terms = np.empty(n_terms + 1)
    terms[0] = c * gaps[0]
    a_over_factorial = 1.0
    for n in range(1, n_terms + 1):
        a_over_factorial *= a / n
        terms[n] = -c * a_over_factorial * gaps[n] / (2 * n - 1)

    leading = bachelier_price(m, table.v)
    largest = int(np.argmax(np.abs(terms[1:]))) + 1 if n_terms > 0 else 0
    divergent = n_terms > 0 and largest >= n_terms and abs(terms[largest]) > 0.0
    if divergent:
        logger.warning(
            "Series for k=%s, T=%s still growing at order %d; moneyness too far in the wing",
            m.k, m.T, n_terms,
        )
    return SeriesPrice(
        price=float(leading + np.sum(terms)),
        terms=terms,
        n_used=n_terms,
        leading=leading,
        largest_term_index=largest,
        last_term=float(abs(terms[-1])),
        wing_divergence=divergent,
    )


def optimal_terms(
    m: MarketSpec, table: MomentTable, tol: float = DEFAULT_N_STAR_TOL
) -> tuple[int, float]:
    """Smallest N >= 1 whose implied volatility moves by less than tol at order N + 1.

    Returns:
        (N*, |IV(N*) - IV(N* + 1)|), volatilities in absolute Bachelier units.

    Raises:
        NonConvergenceError: If no N < table.n_max meets the criterion.
    """
    if tol <= 0.0:
        raise DomainError(f"Tolerance must be positive, got {tol}.")
    partials = series_price(m, table, table.n_max).partial_prices()
    ivs: list[float | None] = []
    for price in partials:
        try:
            ivs.append(implied_vol_bachelier(m, float(price)))
        except (ArbitrageError, NonConvergenceError):
            ivs.append(None)

    last_gap = math.nan
    for n in range(1, table.n_max):
        current, following = ivs[n], ivs[n + 1]
        if current is None or following is None:
            continue
        last_gap = abs(current - following)
        if last_gap < tol:
            return n, last_gap
    failed = sum(iv is None for iv in ivs[1:])
    raise NonConvergenceError(
        f"Implied volatility at k={m.k}, T={m.T} did not settle within {tol} up to order "
        f"{table.n_max} (last gap {last_gap:.3g}, {failed} order(s) without an implied vol)."
    )


def series_delta(m: MarketSpec, table: MomentTable, n_terms: int = DEFAULT_N_TERMS) -> float:
    """d/dx of :func:`series_price`.

    N(d(v)) + (x - k) / sqrt(2 pi T) sum_n A^(n-1) D_n / ((n-1)! (2n - 1))
    """
    _check_table(m, table, n_terms)
    a = _moneyness_power(m)
    gaps = table.moment_gaps
    total = 0.0
    b = 1.0
    for n in range(1, n_terms + 1):
        total += b * gaps[n] / (2 * n - 1)
        b *= a / n
    return float(bachelier_delta(m, table.v)) + m.moneyness / (SQRT_2PI * math.sqrt(m.T)) * total


def series_gamma(m: MarketSpec, table: MomentTable, n_terms: int = DEFAULT_N_TERMS) -> float:
    """d^2/dx^2 of :func:`series_price`.

    N'(d(v)) / (v sqrt(T)) + 1 / sqrt(2 pi T) sum_n A^(n-1) D_n / (n-1)!
    """
    _check_table(m, table, n_terms)
    a = _moneyness_power(m)
    gaps = table.moment_gaps
    total = 0.0
    b = 1.0
    for n in range(1, n_terms + 1):
        total += b * gaps[n]
        b *= a / n
    return float(bachelier_gamma(m, table.v)) + total / (SQRT_2PI * math.sqrt(m.T))


def price_via_decomposition(m: MarketSpec, model: VolModel, batch: PathBatch) -> McEstimate:
    """Monte Carlo price Bac(T, x, k, v) + (T^2 / 8) E int_0^T K_Bac(v_s) d<M,M>_s.

    Raises:
        DomainError: If rho != 0 or the batch maturity differs from m.T.
        MissingPathDataError: If the batch did not keep its variance grid.
    """
    if model.rho != 0.0:
        raise DomainError(f"The decomposition holds for rho = 0 only, got rho={model.rho}.")
    if not math.isclose(m.T, batch.T, rel_tol=1e-12):
        raise DomainError(f"Batch was simulated for T={batch.T}, not T={m.T}.")
    leading = bachelier_price(m, math.sqrt(m0(model, m.T)))
    correction = np.empty(batch.n_paths)
    for start in range(0, batch.n_paths, PATHS_PER_BLOCK):
        rows = slice(start, start + PATHS_PER_BLOCK)
        v_s, density = martingale_nodes(batch, model, rows)
        positive = density > 0.0
        kernel = np.zeros_like(v_s)
        kernel[positive] = bachelier_kernel(m, v_s[positive])
        correction[rows] = trapezoid_in_time(kernel * density, batch.times)
    return estimate_from_samples(leading + m.T**2 / 8.0 * correction, batch.antithetic)
